#include "hypertta/cela.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "hypertta/common.hpp"

namespace hypertta {

namespace {

using nlohmann::json;

std::vector<Parameter*> ln_params(SstcModel& model) {
  std::vector<Parameter*> out;
  for (Parameter& p : model.params) {
    if (is_ln_affine(p)) out.push_back(&p);
  }
  if (out.empty()) {
    throw ConfigError("adaptation needs LayerNorm affine parameters (\"ln*\" tags)");
  }
  return out;
}

}  // namespace

void AdaptConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("adapt: tau must lie in (0,1)");
  if (!(top_fraction > 0.0 && top_fraction < 1.0)) {
    throw ConfigError("adapt: top fraction must lie in (0,1)");
  }
  if (lr < 0.0) throw ConfigError("adapt: learning rate must be nonnegative");
  if (steps < 1) throw ConfigError("adapt: need at least one step per batch");
  if (batch < 1) throw ConfigError("adapt: batch size must be positive");
}

json AdaptConfig::to_json() const {
  return json{{"tau", tau},       {"top_fraction", top_fraction},
              {"lr", lr},         {"steps", steps},
              {"batch", batch},   {"reset", to_string(reset)},
              {"seed", seed}};
}

AdaptConfig AdaptConfig::from_json(const json& j) {
  AdaptConfig cfg;
  try {
    cfg.tau = j.value("tau", cfg.tau);
    cfg.top_fraction = j.value("top_fraction", cfg.top_fraction);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.batch = j.value("batch", cfg.batch);
    if (j.contains("reset")) cfg.reset = reset_mode_from_string(j.at("reset"));
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    throw ConfigError("adapt config: " + std::string(e.what()));
  }
  return cfg;
}

std::string to_string(AdaptConfig::ResetMode mode) {
  return mode == AdaptConfig::ResetMode::PerBatch ? "per_batch" : "per_run";
}

AdaptConfig::ResetMode reset_mode_from_string(const std::string& s) {
  if (s == "per_batch") return AdaptConfig::ResetMode::PerBatch;
  if (s == "per_run") return AdaptConfig::ResetMode::PerRun;
  throw ConfigError("unknown reset mode \"" + s + "\" (per_batch or per_run)");
}

std::vector<double> prediction_entropy(const Tensor& probs) {
  if (probs.rank() != 2) throw ConfigError("prediction_entropy: expects [B,K]");
  const std::int64_t B = probs.shape[0];
  const std::int64_t K = probs.shape[1];
  std::vector<double> out(static_cast<std::size_t>(B));
  for (std::int64_t b = 0; b < B; ++b) {
    double sum = 0.0;
    double h = 0.0;
    for (std::int64_t k = 0; k < K; ++k) {
      const double p = probs.at2(b, k);
      sum += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(sum - 1.0) > 1e-4) {
      throw NumericError("prediction_entropy: row " + std::to_string(b) +
                         " sums to " + std::to_string(sum));
    }
    out[static_cast<std::size_t>(b)] = h;
  }
  return out;
}

Selection select_indices(const Tensor& probs, double tau, double top_fraction) {
  if (probs.rank() != 2 || probs.shape[0] == 0) {
    throw ConfigError("select_indices: empty batch");
  }
  const std::int64_t B = probs.shape[0];
  const std::int64_t K = probs.shape[1];
  std::vector<double> conf(static_cast<std::size_t>(B));
  for (std::int64_t b = 0; b < B; ++b) {
    double c = probs.at2(b, 0);
    for (std::int64_t k = 1; k < K; ++k) c = std::max(c, probs.at2(b, k));
    conf[static_cast<std::size_t>(b)] = c;
  }
  const int kstar = static_cast<int>(std::ceil(top_fraction * static_cast<double>(B)));

  Selection sel;
  for (std::int64_t b = 0; b < B; ++b) {
    if (conf[static_cast<std::size_t>(b)] > tau) sel.indices.push_back(static_cast<int>(b));
  }
  if (static_cast<int>(sel.indices.size()) >= kstar) {
    sel.mode = SelectionMode::Threshold;
    return sel;
  }
  // Fall back to the k* most confident rows, ties to the lower index.
  std::vector<int> order(static_cast<std::size_t>(B));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return conf[static_cast<std::size_t>(a)] > conf[static_cast<std::size_t>(b)];
  });
  sel.indices.assign(order.begin(), order.begin() + kstar);
  sel.mode = SelectionMode::TopK;
  return sel;
}

double adapt_loss(const Tensor& probs, const std::vector<int>& selected) {
  if (selected.empty()) throw ConfigError("adapt_loss: empty selection");
  const std::vector<double> h = prediction_entropy(probs);
  double sum = 0.0;
  for (int j : selected) {
    if (j < 0 || static_cast<std::size_t>(j) >= h.size()) {
      throw ConfigError("adapt_loss: selected index out of range");
    }
    sum += h[static_cast<std::size_t>(j)];
  }
  return sum / static_cast<double>(selected.size());
}

LnSnapshot LnSnapshot::capture(const SstcModel& model) {
  LnSnapshot snap;
  for (const Parameter& p : model.params) {
    if (is_ln_affine(p)) snap.values.emplace_back(p.tag, p.value);
  }
  if (snap.values.empty()) {
    throw ConfigError("adaptation needs LayerNorm affine parameters (\"ln*\" tags)");
  }
  return snap;
}

void LnSnapshot::restore(SstcModel& model) const {
  for (const auto& [tag, value] : values) {
    Parameter& p = model.at(tag);
    if (!p.value.same_shape(value)) {
      throw ConfigError("snapshot shape mismatch at \"" + tag + "\"");
    }
    p.value.data = value.data;
  }
}

json AdaptReport::to_json() const {
  json entries = json::array();
  for (const AdaptBatchEntry& e : batches) {
    entries.push_back(json{{"batch", e.batch_index},
                           {"size", e.batch_size},
                           {"selected", e.selected},
                           {"mode", e.mode},
                           {"entropy_before", e.entropy_before},
                           {"entropy_after", e.entropy_after},
                           {"ln_delta_l2", e.ln_delta_l2}});
  }
  return json{{"config", config.to_json()}, {"batches", entries}};
}

std::vector<int> adapt_batch(SstcModel& model, Tensor batch, const AdaptConfig& cfg,
                             AdaptBatchEntry* entry) {
  cfg.validate();
  const std::vector<Parameter*> ln = ln_params(model);
  std::vector<Tensor> before;
  before.reserve(ln.size());
  for (const Parameter* p : ln) before.push_back(p->value);

  std::vector<int> first_selection;
  std::string first_mode;
  for (int s = 0; s < cfg.steps; ++s) {
    Tape tape;
    Var probs = sstc_probs(tape, model, batch);
    const Selection sel = select_indices(tape.value(probs), cfg.tau, cfg.top_fraction);
    if (s == 0) {
      first_selection = sel.indices;
      first_mode = sel.mode == SelectionMode::Threshold ? "threshold" : "topk";
      if (entry) entry->entropy_before = adapt_loss(tape.value(probs), sel.indices);
    }
    Var loss = tape.mean_entropy(probs, sel.indices);
    if (!std::isfinite(tape.value(loss).data[0])) {
      throw NumericError("adapt: non-finite entropy loss");
    }
    model.zero_grads();
    tape.backward(loss, is_ln_affine);
    for (Parameter* p : ln) {
      double* v = p->value.ptr();
      const double* g = p->grad.ptr();
      for (std::int64_t i = 0; i < p->value.numel(); ++i) v[i] -= cfg.lr * g[i];
    }
  }

  Tape tape;
  Var probs = sstc_probs(tape, model, std::move(batch));
  const Tensor& final_probs = tape.value(probs);
  if (entry) {
    entry->batch_size = static_cast<int>(final_probs.shape[0]);
    entry->selected = static_cast<int>(first_selection.size());
    entry->mode = first_mode;
    entry->entropy_after = adapt_loss(final_probs, first_selection);
    double sq = 0.0;
    for (std::size_t i = 0; i < ln.size(); ++i) {
      const double* a = ln[i]->value.ptr();
      const double* b = before[i].ptr();
      for (std::int64_t j = 0; j < before[i].numel(); ++j) {
        const double d = a[j] - b[j];
        sq += d * d;
      }
    }
    entry->ln_delta_l2 = std::sqrt(sq);
  }
  return argmax_rows(final_probs);
}

AdaptResult run_adaptation(SstcModel& model, const Tensor& stream, const AdaptConfig& cfg) {
  cfg.validate();
  if (stream.rank() != 4) throw ConfigError("run_adaptation: stream must be [N,C,w,w]");
  const std::int64_t N = stream.shape[0];
  if (N == 0) throw DataError("run_adaptation: empty target stream");

  const LnSnapshot snapshot = LnSnapshot::capture(model);
  snapshot.restore(model);  // start every run from the pretrained values

  AdaptResult result;
  result.report.config = cfg;
  const std::int64_t sample = stream.numel() / N;
  int batch_index = 0;
  for (std::int64_t start = 0; start < N; start += cfg.batch, ++batch_index) {
    const std::int64_t end = std::min(N, start + cfg.batch);
    if (cfg.reset == AdaptConfig::ResetMode::PerBatch) snapshot.restore(model);
    Tensor batch({end - start, stream.shape[1], stream.shape[2], stream.shape[3]});
    std::memcpy(batch.ptr(), stream.ptr() + start * sample,
                static_cast<std::size_t>((end - start) * sample) * sizeof(double));
    AdaptBatchEntry entry;
    entry.batch_index = batch_index;
    const std::vector<int> preds = adapt_batch(model, std::move(batch), cfg, &entry);
    for (int p : preds) result.predictions.push_back(static_cast<std::uint16_t>(p));
    result.report.batches.push_back(std::move(entry));
  }
  return result;
}

void write_predictions(const std::filesystem::path& path,
                       const std::vector<std::uint16_t>& predictions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write predictions " + path.string());
  out.write(reinterpret_cast<const char*>(predictions.data()),
            static_cast<std::streamsize>(predictions.size() * sizeof(std::uint16_t)));
  if (!out) throw DataError("short write on predictions " + path.string());
}

std::vector<std::uint16_t> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open predictions " + path.string());
  const std::streamsize bytes = in.tellg();
  if (bytes % 2 != 0) throw DataError("predictions file has odd length: " + path.string());
  in.seekg(0);
  std::vector<std::uint16_t> out(static_cast<std::size_t>(bytes / 2));
  in.read(reinterpret_cast<char*>(out.data()), bytes);
  if (!in) throw DataError("short read on predictions " + path.string());
  return out;
}

}  // namespace hypertta
