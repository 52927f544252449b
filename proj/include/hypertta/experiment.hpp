#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypertta/cela.hpp"
#include "hypertta/degrade.hpp"
#include "hypertta/hsi.hpp"
#include "hypertta/metrics.hpp"
#include "hypertta/sstc.hpp"
#include "hypertta/synth.hpp"
#include "hypertta/tensor.hpp"

namespace hypertta {

// End-to-end harness: generate or load a labeled cube, train the patch
// classifier on the clean train split, then for each degradation evaluate
// the frozen model and the entropy-adapted model on the target split and
// emit CSV / Markdown / JSON reports.

struct ExperimentPlan {
  // Dataset: synthetic spec, or explicit cube+labels paths when not set.
  std::optional<SyntheticSpec> synthetic = SyntheticSpec{};
  std::filesystem::path cube_path;
  std::filesystem::path labels_path;

  double train_fraction = 0.2;
  SstcConfig sstc;
  AdaptConfig adapt;
  std::vector<DegradationSpec> degradations;  // resolved nonempty list
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  int repeats = 1;
  bool eval_clean = true;          // also score the frozen model on clean data
  std::vector<int> preview;        // three band indices; empty = pick from wavelengths

  void validate() const;
  nlohmann::json to_json() const;
  // Accepts "degradations": [...] entries in metadata form {type,params,seed},
  // or "default"/absent for the nine-operator benchmark list (stripe_min /
  // stripe_max keys size the stripe and deadline counts, default 8 and 11).
  static ExperimentPlan from_json(const nlohmann::json& j);
};

struct Dataset {
  HsiCube cube;
  LabelMap labels;
};

// Directory holding exactly one *.hsi and one *.lbl (plus sidecars).
Dataset load_dataset_dir(const std::filesystem::path& dir);

// Patch tensor [N,C,w,w] for the given row-major pixel indices.
Tensor patches_at(const HsiCube& cube, const std::vector<std::int64_t>& pixels, int w);
// 0-based class ids for the given pixels; throws on unlabeled.
std::vector<int> labels_at(const LabelMap& labels, const std::vector<std::int64_t>& pixels);

// Forward the stream [N,C,w,w] in chunks of `batch`; argmax per row.
std::vector<int> classify_stream(SstcModel& model, const Tensor& stream, int batch);

struct TrainedModel {
  SstcModel model;
  TrainReport report;
  SplitSpec split;
};

// Split, extract clean train patches, train. The checkpoint extra written by
// callers should carry split_extra() so adaptation can rebuild the split.
TrainedModel train_pipeline(const HsiCube& cube, const LabelMap& labels, SstcConfig cfg,
                            double train_fraction, std::uint64_t split_seed);
nlohmann::json split_extra(const SplitSpec& split, const std::string& data_digest);

// Target stream for adaptation: target-side pixels shuffled by cfg.seed
// (stream tag "ADPT"), so batches mix classes and regions.
struct AdaptStream {
  Tensor patches;                        // [N,C,w,w] in stream order
  std::vector<std::int64_t> pixels;      // flat pixel index per stream row
};
AdaptStream build_adapt_stream(const HsiCube& cube, const SplitSpec& split,
                               int patch_size, std::uint64_t seed);

// Frozen-model metrics on the target split; optional canonical-order preds.
Metrics eval_frozen(SstcModel& model, const HsiCube& cube, const LabelMap& labels,
                    const SplitSpec& split, int batch,
                    std::vector<std::uint16_t>* predictions = nullptr);

struct AdaptOutcome {
  AdaptResult result;                    // stream-order predictions + report
  std::vector<std::int64_t> stream_pixels;
  Metrics metrics;
};
AdaptOutcome adapt_pipeline(SstcModel& model, const HsiCube& degraded, const LabelMap& labels,
                            const SplitSpec& split, const AdaptConfig& cfg);

// P6 PPM, three bands min-max scaled to 8 bits per channel.
void export_preview(const HsiCube& cube, int r, int g, int b,
                    const std::filesystem::path& path);

struct DegRow {
  int repeat = 0;
  int index = 0;
  std::string type;
  nlohmann::json params;
  Metrics unadapted;
  Metrics adapted;
};

std::string results_csv(const std::vector<DegRow>& rows);
std::string results_markdown(const std::vector<DegRow>& rows);

struct ExperimentResult {
  std::vector<DegRow> rows;
  nlohmann::json report;
  std::filesystem::path csv_path;
  std::filesystem::path md_path;
  std::filesystem::path report_path;
};

// Runs the full plan; artifacts land under plan.output_dir (plan.json,
// rep<r>/ trees, results.csv, results.md, report.json). Any stage failure
// rethrows with the stage name prefixed; artifacts written so far remain.
ExperimentResult run_experiment(const ExperimentPlan& plan);

// Rebuild results.csv and results.md from the eval.json files under dir.
void rebuild_reports(const std::filesystem::path& dir);

}  // namespace hypertta
