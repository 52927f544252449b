#include "hypertta/metrics.hpp"

#include <cmath>

#include "hypertta/common.hpp"

namespace hypertta {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(int k) : classes(k) {
  if (k < 1) throw ConfigError("confusion matrix needs at least one class");
  counts.assign(static_cast<std::size_t>(k) * k, 0);
}

std::int64_t& ConfusionMatrix::at(int truth, int pred) {
  return counts[static_cast<std::size_t>(truth) * classes + pred];
}

std::int64_t ConfusionMatrix::at(int truth, int pred) const {
  return counts[static_cast<std::size_t>(truth) * classes + pred];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t c : counts) t += c;
  return t;
}

json ConfusionMatrix::to_json() const {
  json rows = json::array();
  for (int t = 0; t < classes; ++t) {
    json row = json::array();
    for (int p = 0; p < classes; ++p) row.push_back(at(t, p));
    rows.push_back(row);
  }
  return rows;
}

json Metrics::to_json() const {
  json j{{"oa", oa}, {"aa", aa}, {"kappa", kappa}, {"confusion", confusion.to_json()}};
  if (!warnings.empty()) j["warnings"] = warnings;
  return j;
}

Metrics evaluate(const std::vector<int>& predictions, const std::vector<int>& labels,
                 int classes) {
  if (predictions.size() != labels.size()) {
    throw DataError("evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i];
    const int p = predictions[i];
    if (t < 0 || t >= classes || p < 0 || p >= classes) {
      throw DataError("evaluate: class id outside 0.." + std::to_string(classes - 1) +
                      " at position " + std::to_string(i));
    }
    ++cm.at(t, p);
  }
  return evaluate(cm);
}

Metrics evaluate(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw DataError("evaluate: empty confusion matrix");
  Metrics m{0.0, 0.0, 0.0, cm, {}};

  std::int64_t trace = 0;
  double recall_sum = 0.0;
  int present = 0;
  double pe_num = 0.0;
  for (int c = 0; c < cm.classes; ++c) {
    trace += cm.at(c, c);
    std::int64_t row = 0;
    std::int64_t col = 0;
    for (int j = 0; j < cm.classes; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    if (row > 0) {
      recall_sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
      ++present;
    } else {
      m.warnings.push_back("class " + std::to_string(c) +
                           " has no true pixels; excluded from AA");
    }
    pe_num += static_cast<double>(row) * static_cast<double>(col);
  }
  m.oa = static_cast<double>(trace) / static_cast<double>(total);
  if (present == 0) throw DataError("evaluate: no class has true pixels");
  m.aa = recall_sum / static_cast<double>(present);
  const double pe = pe_num / (static_cast<double>(total) * static_cast<double>(total));
  if (std::abs(1.0 - pe) < 1e-15) {
    // All mass in one row/column pair: chance agreement is total.
    m.kappa = m.oa >= 1.0 ? 1.0 : 0.0;
    m.warnings.push_back("degenerate chance agreement (p_e = 1)");
  } else {
    m.kappa = (m.oa - pe) / (1.0 - pe);
  }
  return m;
}

}  // namespace hypertta
