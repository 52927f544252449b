#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace hypertta {

struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;  // K*K row-major; rows = truth, cols = prediction

  ConfusionMatrix() = default;  // empty placeholder; evaluate() rejects it
  explicit ConfusionMatrix(int k);
  std::int64_t& at(int truth, int pred);
  std::int64_t at(int truth, int pred) const;
  std::int64_t total() const;
  nlohmann::json to_json() const;
};

struct Metrics {
  double oa = 0.0;     // trace / total
  double aa = 0.0;     // mean per-class recall, absent classes excluded
  double kappa = 0.0;  // (p_o - p_e) / (1 - p_e)
  ConfusionMatrix confusion;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Labels and predictions are 0-based class ids of equal length.
Metrics evaluate(const std::vector<int>& predictions, const std::vector<int>& labels,
                 int classes);
Metrics evaluate(const ConfusionMatrix& confusion);

}  // namespace hypertta
