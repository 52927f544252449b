#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypertta/autodiff.hpp"
#include "hypertta/tensor.hpp"

namespace hypertta {

// Patch classifier: multi-kernel conv front-end over the spectral patch,
// token encoder with multi-head self-attention, and a head reading the
// center token. All compute is f64 on the autodiff tape.

struct SstcConfig {
  int patch_size = 5;  // w, odd; token count L = w*w
  std::vector<int> branch_kernels = {3, 5, 7};
  std::vector<int> branch_dims = {32, 32, 32};  // projected channels per branch
  int heads = 4;
  int layers = 2;
  int classes = 0;  // K, required
  int bands = 0;    // C, set from the data
  bool positional = true;
  double smoothing = 0.05;  // label-smoothing epsilon
  double lr = 0.001;        // Adam learning rate
  int epochs = 8;
  int batch = 64;
  std::uint64_t seed = 1;

  int model_dim() const;     // d = sum of branch_dims
  int tokens() const;        // L = w*w
  int center_token() const;  // w*(w/2) + w/2
  void validate() const;
  nlohmann::json to_json() const;
  static SstcConfig from_json(const nlohmann::json& j);
};

struct SstcModel {
  SstcConfig config;
  std::vector<Parameter> params;  // fixed order; tags unique; LN tags "ln*"

  static SstcModel init(const SstcConfig& cfg);  // seeded deterministic init
  Parameter& at(const std::string& tag);
  const Parameter& at(const std::string& tag) const;
  void zero_grads();
  std::string digest() const;  // sha256 over the f64 payload in param order
};

// Graph builders on a caller-owned tape. Patches are [B,C,w,w] in [0,1].
Var sstc_probs(Tape& tape, SstcModel& model, Tensor patches);    // -> [B,K]
Var sstc_mrf_maps(Tape& tape, SstcModel& model, Tensor patches); // -> [B,d,w,w]

// Forward-only convenience (fresh tape, no backward).
Tensor sstc_classify(SstcModel& model, Tensor patches);
std::vector<int> argmax_rows(const Tensor& probs);

// Smoothed one-hot targets: eps/K everywhere, 1-eps+eps/K at the label.
// Labels are 0-based; out of [0,K) throws.
Tensor smooth_labels(const std::vector<int>& labels, int classes, double eps);

struct TrainReport {
  std::vector<double> epoch_loss;      // mean per-sample loss
  std::vector<double> epoch_accuracy;  // on the training stream
  std::string final_digest;
  nlohmann::json to_json() const;
};

// Adam (0.9, 0.999, 1e-8) over shuffled mini-batches of the smoothed CE
// loss. Deterministic under cfg.seed. Non-finite loss aborts.
TrainReport sstc_train(SstcModel& model, const Tensor& patches,
                       const std::vector<int>& labels);

// Checkpoint: magic, u64 manifest length, manifest JSON {config, params
// (tag+shape), digest, extra}, then the raw little-endian f64 payload in
// manifest order. Round-trips bit-exact.
void save_checkpoint(const SstcModel& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());
SstcModel load_checkpoint(const std::filesystem::path& path,
                          nlohmann::json* extra = nullptr);

}  // namespace hypertta
