#include "hypertta/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "hypertta/common.hpp"
#include "hypertta/io.hpp"
#include "hypertta/parallel.hpp"
#include "hypertta/rng.hpp"

namespace hypertta {

namespace {

using nlohmann::json;

constexpr std::uint32_t kAdaptShuffleTag = 0x41445054;  // "ADPT"

// Rethrow stage failures with the stage name attached, preserving the
// error class so the CLI exit code still reflects the cause.
template <typename F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("stage " + name + ": " + e.what());
  } catch (const Error& e) {
    throw Error("stage " + name + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error("stage " + name + ": " + e.what());
  }
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string signed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%+.2f", v);
  return buf;
}

// Flat "k=v" pairs joined by ';' — keeps CSV cells comma-free. nlohmann
// objects iterate in key order, so the rendering is deterministic.
std::string params_cell(const json& params) {
  std::string out;
  for (auto it = params.begin(); it != params.end(); ++it) {
    if (!out.empty()) out += ';';
    out += it.key();
    out += '=';
    out += it.value().dump();
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

json metrics_brief(const Metrics& m) {
  json j{{"oa", m.oa}, {"aa", m.aa}, {"kappa", m.kappa}};
  if (!m.warnings.empty()) j["warnings"] = m.warnings;
  return j;
}

struct Agg {
  double mean = 0.0;
  double half_range = 0.0;
};

Agg aggregate(const std::vector<double>& values) {
  Agg a;
  if (values.empty()) return a;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  a.half_range = (*hi - *lo) / 2.0;
  return a;
}

// "91.23" for a single run, "91.23 ± 0.45" across repeats.
std::string agg_cell(const std::vector<double>& values, bool signed_mean = false) {
  const Agg a = aggregate(values);
  std::string out = signed_mean ? signed2(a.mean) : fixed2(a.mean);
  if (values.size() > 1) out += " ± " + fixed2(a.half_range);
  return out;
}

}  // namespace

void ExperimentPlan::validate() const {
  if (!synthetic && (cube_path.empty() || labels_path.empty())) {
    throw ConfigError("plan needs a synthetic spec or cube+labels paths");
  }
  if (synthetic) synthetic->validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0,1)");
  }
  if (degradations.empty()) throw ConfigError("degradation list is empty");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (!preview.empty() && preview.size() != 3) {
    throw ConfigError("preview needs exactly three band indices");
  }
  adapt.validate();
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
}

json ExperimentPlan::to_json() const {
  json j;
  if (synthetic) {
    j["dataset"] = json{{"synthetic", synthetic->to_json()}};
  } else {
    j["dataset"] = json{{"cube", cube_path.string()}, {"labels", labels_path.string()}};
  }
  j["train_fraction"] = train_fraction;
  j["sstc"] = sstc.to_json();
  j["adapt"] = adapt.to_json();
  json degs = json::array();
  for (const auto& d : degradations) {
    degs.push_back(json{{"type", d.type_name()},
                        {"params", params_to_json(d.params)},
                        {"seed", d.seed}});
  }
  j["degradations"] = degs;
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  j["repeats"] = repeats;
  j["eval_clean"] = eval_clean;
  if (!preview.empty()) j["preview"] = preview;
  return j;
}

ExperimentPlan ExperimentPlan::from_json(const json& j) {
  ExperimentPlan p;
  try {
    p.seed = j.value("seed", p.seed);
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      if (d.contains("synthetic")) {
        p.synthetic = SyntheticSpec::from_json(d.at("synthetic"));
      } else {
        p.synthetic.reset();
        p.cube_path = d.at("cube").get<std::string>();
        p.labels_path = d.at("labels").get<std::string>();
      }
    }
    p.train_fraction = j.value("train_fraction", p.train_fraction);
    if (j.contains("sstc")) p.sstc = SstcConfig::from_json(j.at("sstc"));
    if (j.contains("adapt")) p.adapt = AdaptConfig::from_json(j.at("adapt"));
    const int stripe_min = j.value("stripe_min", 8);
    const int stripe_max = j.value("stripe_max", 11);
    if (!j.contains("degradations") ||
        (j.at("degradations").is_string() && j.at("degradations") == "default")) {
      p.degradations = default_degradations(p.seed, stripe_min, stripe_max);
    } else {
      for (const json& entry : j.at("degradations")) {
        p.degradations.push_back(spec_from_metadata(entry));
      }
    }
    if (j.contains("output_dir")) p.output_dir = j.at("output_dir").get<std::string>();
    p.repeats = j.value("repeats", p.repeats);
    p.eval_clean = j.value("eval_clean", p.eval_clean);
    if (j.contains("preview")) p.preview = j.at("preview").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ConfigError("experiment plan: " + std::string(e.what()));
  }
  return p;
}

Dataset load_dataset_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> cubes, lbls;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".hsi") cubes.push_back(entry.path());
    if (entry.path().extension() == ".lbl") lbls.push_back(entry.path());
  }
  if (cubes.size() != 1 || lbls.size() != 1) {
    throw DataError(dir.string() + ": expected exactly one .hsi and one .lbl, found " +
                    std::to_string(cubes.size()) + " and " + std::to_string(lbls.size()));
  }
  Dataset ds{read_cube(cubes.front()), read_labels(lbls.front())};
  if (ds.cube.height != ds.labels.height || ds.cube.width != ds.labels.width) {
    throw DataError("cube and label rasters disagree on size");
  }
  return ds;
}

Tensor patches_at(const HsiCube& cube, const std::vector<std::int64_t>& pixels, int w) {
  const std::int64_t n = static_cast<std::int64_t>(pixels.size());
  const int c = cube.bands;
  Tensor out({n, c, w, w});
  const std::int64_t row_len = static_cast<std::int64_t>(c) * w * w;
  parallel_for(n, [&](std::int64_t i) {
    const std::int64_t p = pixels[static_cast<std::size_t>(i)];
    const int r = static_cast<int>(p / cube.width);
    const int col = static_cast<int>(p % cube.width);
    const Patch patch = extract_patch(cube, r, col, w);
    std::memcpy(out.ptr() + i * row_len, patch.values.data(),
                static_cast<std::size_t>(row_len) * sizeof(double));
  });
  return out;
}

std::vector<int> labels_at(const LabelMap& labels, const std::vector<std::int64_t>& pixels) {
  std::vector<int> out;
  out.reserve(pixels.size());
  for (std::int64_t p : pixels) {
    const std::uint16_t v = labels.labels[static_cast<std::size_t>(p)];
    if (v == 0) throw DataError("pixel " + std::to_string(p) + " is unlabeled");
    out.push_back(static_cast<int>(v) - 1);  // map ids 1..K -> classes 0..K-1
  }
  return out;
}

std::vector<int> classify_stream(SstcModel& model, const Tensor& stream, int batch) {
  if (stream.rank() != 4) throw ConfigError("stream must be [N,C,w,w]");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  const std::int64_t n = stream.dim(0);
  const std::int64_t row_len = stream.dim(1) * stream.dim(2) * stream.dim(3);
  std::vector<int> preds;
  preds.reserve(static_cast<std::size_t>(n));
  for (std::int64_t off = 0; off < n; off += batch) {
    const std::int64_t b = std::min<std::int64_t>(batch, n - off);
    Tensor chunk({b, stream.dim(1), stream.dim(2), stream.dim(3)});
    std::memcpy(chunk.ptr(), stream.ptr() + off * row_len,
                static_cast<std::size_t>(b * row_len) * sizeof(double));
    const Tensor probs = sstc_classify(model, std::move(chunk));
    for (int v : argmax_rows(probs)) preds.push_back(v);
  }
  return preds;
}

TrainedModel train_pipeline(const HsiCube& cube, const LabelMap& labels, SstcConfig cfg,
                            double train_fraction, std::uint64_t split_seed) {
  cfg.bands = cube.bands;
  if (cfg.classes == 0) cfg.classes = labels.num_classes();
  cfg.validate();
  SplitSpec split = stratified_split(labels, train_fraction, split_seed);
  const std::vector<std::int64_t> train_pixels = split.pixels(SplitTag::Train);
  const Tensor patches = patches_at(cube, train_pixels, cfg.patch_size);
  const std::vector<int> ids = labels_at(labels, train_pixels);
  SstcModel model = SstcModel::init(cfg);
  TrainReport report = sstc_train(model, patches, ids);
  return TrainedModel{std::move(model), std::move(report), std::move(split)};
}

json split_extra(const SplitSpec& split, const std::string& data_digest) {
  return json{{"split", json{{"seed", split.seed},
                             {"train_fraction", split.train_fraction},
                             {"height", split.height},
                             {"width", split.width}}},
              {"data_digest", data_digest}};
}

AdaptStream build_adapt_stream(const HsiCube& cube, const SplitSpec& split,
                               int patch_size, std::uint64_t seed) {
  AdaptStream s;
  s.pixels = split.pixels(SplitTag::Target);
  RngStream rng(seed, kAdaptShuffleTag, 0);
  rng.shuffle(s.pixels);
  s.patches = patches_at(cube, s.pixels, patch_size);
  return s;
}

Metrics eval_frozen(SstcModel& model, const HsiCube& cube, const LabelMap& labels,
                    const SplitSpec& split, int batch,
                    std::vector<std::uint16_t>* predictions) {
  const std::vector<std::int64_t> target = split.pixels(SplitTag::Target);
  const Tensor stream = patches_at(cube, target, model.config.patch_size);
  const std::vector<int> preds = classify_stream(model, stream, batch);
  if (predictions) {
    predictions->assign(preds.size(), 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      (*predictions)[i] = static_cast<std::uint16_t>(preds[i]);
    }
  }
  return evaluate(preds, labels_at(labels, target), model.config.classes);
}

AdaptOutcome adapt_pipeline(SstcModel& model, const HsiCube& degraded, const LabelMap& labels,
                            const SplitSpec& split, const AdaptConfig& cfg) {
  AdaptStream stream = build_adapt_stream(degraded, split, model.config.patch_size, cfg.seed);
  AdaptResult result = run_adaptation(model, stream.patches, cfg);
  // The table's "adapted" columns score the model that exists after the full
  // pass, so re-classify the stream instead of reusing the online predictions
  // (those mix early, barely-adapted batches with late ones).
  const std::vector<int> preds = classify_stream(model, stream.patches, 64);
  result.predictions.assign(preds.size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    result.predictions[i] = static_cast<std::uint16_t>(preds[i]);
  }
  Metrics m = evaluate(preds, labels_at(labels, stream.pixels), model.config.classes);
  return AdaptOutcome{std::move(result), std::move(stream.pixels), std::move(m)};
}

void export_preview(const HsiCube& cube, int r, int g, int b,
                    const std::filesystem::path& path) {
  for (int band : {r, g, b}) {
    if (band < 0 || band >= cube.bands) {
      throw ConfigError("preview band " + std::to_string(band) + " out of range [0," +
                        std::to_string(cube.bands) + ")");
    }
  }
  const std::size_t pixels = cube.pixel_count();
  std::vector<std::uint8_t> payload(pixels * 3);
  const int chans[3] = {r, g, b};
  for (int ch = 0; ch < 3; ++ch) {
    const float* band = cube.band_ptr(chans[ch]);
    float lo = band[0], hi = band[0];
    for (std::size_t i = 1; i < pixels; ++i) {
      lo = std::min(lo, band[i]);
      hi = std::max(hi, band[i]);
    }
    const double span = static_cast<double>(hi) - lo;
    for (std::size_t i = 0; i < pixels; ++i) {
      const double scaled = span > 0.0 ? (band[i] - lo) / span : 0.0;
      payload[i * 3 + ch] = static_cast<std::uint8_t>(std::lround(scaled * 255.0));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << cube.width << " " << cube.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
}

std::string results_csv(const std::vector<DegRow>& rows) {
  std::string out =
      "repeat,index,type,params,oa_unadapted,aa_unadapted,kappa_unadapted,"
      "oa_adapted,aa_adapted,kappa_adapted,delta_oa\n";
  for (const DegRow& row : rows) {
    out += std::to_string(row.repeat) + ',' + std::to_string(row.index) + ',' + row.type +
           ',' + params_cell(row.params) + ',' + fixed6(row.unadapted.oa) + ',' +
           fixed6(row.unadapted.aa) + ',' + fixed6(row.unadapted.kappa) + ',' +
           fixed6(row.adapted.oa) + ',' + fixed6(row.adapted.aa) + ',' +
           fixed6(row.adapted.kappa) + ',' + fixed6(row.adapted.oa - row.unadapted.oa) + '\n';
  }
  return out;
}

std::string results_markdown(const std::vector<DegRow>& rows) {
  // Group by degradation index; aggregate across repeats.
  std::vector<int> indices;
  for (const DegRow& row : rows) {
    if (std::find(indices.begin(), indices.end(), row.index) == indices.end()) {
      indices.push_back(row.index);
    }
  }
  std::sort(indices.begin(), indices.end());
  int repeats = 0;
  for (const DegRow& row : rows) repeats = std::max(repeats, row.repeat + 1);

  std::string out = "# Degradation benchmark\n\n";
  out += "Frozen classifier vs. test-time adaptation (entropy minimization on\n";
  out += "LayerNorm affine parameters). Values are percentages; Kappa is x100.";
  if (repeats > 1) {
    out += " Mean ± half-range over " + std::to_string(repeats) + " repeats.";
  }
  out += "\n\n";
  out +=
      "| # | Degradation | Params | OA% frozen | AA% frozen | κ×100 frozen | "
      "OA% adapted | AA% adapted | κ×100 adapted | ΔOA |\n";
  out += "|---|---|---|---|---|---|---|---|---|---|\n";
  for (int idx : indices) {
    std::vector<double> oa_u, aa_u, k_u, oa_a, aa_a, k_a, delta;
    std::string type, params;
    for (const DegRow& row : rows) {
      if (row.index != idx) continue;
      type = row.type;
      params = params_cell(row.params);
      oa_u.push_back(row.unadapted.oa * 100.0);
      aa_u.push_back(row.unadapted.aa * 100.0);
      k_u.push_back(row.unadapted.kappa * 100.0);
      oa_a.push_back(row.adapted.oa * 100.0);
      aa_a.push_back(row.adapted.aa * 100.0);
      k_a.push_back(row.adapted.kappa * 100.0);
      delta.push_back((row.adapted.oa - row.unadapted.oa) * 100.0);
    }
    out += "| " + std::to_string(idx) + " | " + type + " | " + params + " | " +
           agg_cell(oa_u) + " | " + agg_cell(aa_u) + " | " + agg_cell(k_u) + " | " +
           agg_cell(oa_a) + " | " + agg_cell(aa_a) + " | " + agg_cell(k_a) + " | " +
           agg_cell(delta, true) + " |\n";
  }

  // Footer: mean OA gain across rows (the headline number). Plain mean —
  // the ± spread is reserved for variation across repeats.
  double delta_sum = 0.0;
  for (const DegRow& row : rows) {
    delta_sum += (row.adapted.oa - row.unadapted.oa) * 100.0;
  }
  if (!rows.empty()) {
    out += "\nMean ΔOA across degradations: " +
           signed2(delta_sum / static_cast<double>(rows.size())) + " points.\n";
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  namespace fs = std::filesystem;
  const fs::path root = plan.output_dir;
  fs::create_directories(root);
  write_text(root / "plan.json", plan.to_json().dump(2) + "\n");

  ExperimentResult result;
  json report;
  report["plan"] = plan.to_json();
  report["repeats"] = json::array();

  for (int rep = 0; rep < plan.repeats; ++rep) {
    const fs::path rep_dir = root / ("rep" + std::to_string(rep));
    fs::create_directories(rep_dir);
    json rep_report;
    rep_report["repeat"] = rep;

    // Offsetting every seed by the repeat index gives independent runs
    // that are still fully determined by the plan.
    const std::uint64_t split_seed = plan.seed + static_cast<std::uint64_t>(rep);

    Dataset data = stage("dataset", [&] {
      if (plan.synthetic) {
        SyntheticSpec spec = *plan.synthetic;
        spec.seed += static_cast<std::uint64_t>(rep);
        rep_report["seeds"]["synthetic"] = spec.seed;
        auto [cube, labels] = gen_synthetic(spec);
        return Dataset{std::move(cube), std::move(labels)};
      }
      Dataset ds{read_cube(plan.cube_path), read_labels(plan.labels_path)};
      if (!ds.cube.normalized) {
        NormalizeResult norm = normalize_bands(ds.cube);
        ds.cube = std::move(norm.cube);
        if (!norm.warnings.empty()) rep_report["normalize_warnings"] = norm.warnings;
      }
      return ds;
    });
    stage("dataset", [&] {
      write_cube(data.cube, rep_dir / "clean.hsi");
      write_labels(data.labels, rep_dir / "labels.lbl");
    });
    const std::string data_digest = data.cube.digest();
    rep_report["seeds"]["split"] = split_seed;
    rep_report["data_digest"] = data_digest;

    std::vector<int> preview = plan.preview.empty()
                                   ? std::vector<int>{}
                                   : plan.preview;
    if (preview.empty()) {
      // False color: bands nearest 650/550/470 nm, else spread endpoints.
      if (data.cube.wavelengths_nm) {
        for (double target : {650.0, 550.0, 470.0}) {
          int best = 0;
          for (int c = 1; c < data.cube.bands; ++c) {
            if (std::abs((*data.cube.wavelengths_nm)[c] - target) <
                std::abs((*data.cube.wavelengths_nm)[best] - target)) {
              best = c;
            }
          }
          preview.push_back(best);
        }
      } else {
        preview = {data.cube.bands - 1, data.cube.bands / 2, 0};
      }
    }
    rep_report["preview_bands"] = preview;
    stage("preview", [&] {
      export_preview(data.cube, preview[0], preview[1], preview[2],
                     rep_dir / "clean.ppm");
    });

    SstcConfig train_cfg = plan.sstc;
    train_cfg.seed += static_cast<std::uint64_t>(rep);
    rep_report["seeds"]["train"] = train_cfg.seed;
    TrainedModel trained = stage("train", [&] {
      std::cerr << "[rep " << rep << "] training on clean split...\n";
      return train_pipeline(data.cube, data.labels, train_cfg, plan.train_fraction,
                            split_seed);
    });
    stage("train", [&] {
      save_checkpoint(trained.model, rep_dir / "model.ckpt",
                      split_extra(trained.split, data_digest));
      write_text(rep_dir / "train_report.json", trained.report.to_json().dump(2) + "\n");
    });
    rep_report["model_digest"] = trained.model.digest();
    if (!trained.report.epoch_loss.empty()) {
      rep_report["train"] = json{{"epochs", trained.report.epoch_loss.size()},
                                 {"final_loss", trained.report.epoch_loss.back()},
                                 {"final_accuracy", trained.report.epoch_accuracy.back()}};
    }

    // Split audit: the report carries per-class counts and a disjointness
    // check so "never evaluates on train pixels" is verifiable from files.
    {
      const auto train_px = trained.split.pixels(SplitTag::Train);
      const auto target_px = trained.split.pixels(SplitTag::Target);
      std::set<std::int64_t> train_set(train_px.begin(), train_px.end());
      bool disjoint = true;
      for (std::int64_t p : target_px) {
        if (train_set.count(p)) {
          disjoint = false;
          break;
        }
      }
      const int k = data.labels.num_classes();
      std::vector<std::int64_t> per_class_train(static_cast<std::size_t>(k), 0);
      std::vector<std::int64_t> per_class_target(static_cast<std::size_t>(k), 0);
      for (std::int64_t p : train_px) {
        per_class_train[data.labels.labels[static_cast<std::size_t>(p)] - 1]++;
      }
      for (std::int64_t p : target_px) {
        per_class_target[data.labels.labels[static_cast<std::size_t>(p)] - 1]++;
      }
      json audit{{"train", train_px.size()},
                 {"target", target_px.size()},
                 {"disjoint", disjoint},
                 {"per_class", json::array()}};
      for (int c = 0; c < k; ++c) {
        audit["per_class"].push_back(json{{"class", c},
                                          {"train", per_class_train[c]},
                                          {"target", per_class_target[c]}});
      }
      rep_report["split_audit"] = audit;
    }

    if (plan.eval_clean) {
      const Metrics clean = stage("eval_clean", [&] {
        std::cerr << "[rep " << rep << "] scoring clean target split...\n";
        return eval_frozen(trained.model, data.cube, data.labels, trained.split,
                           plan.sstc.batch);
      });
      rep_report["clean"] = metrics_brief(clean);
      std::cerr << "[rep " << rep << "] clean OA " << fixed2(clean.oa * 100) << "%\n";
    }

    rep_report["degradations"] = json::array();
    rep_report["seeds"]["degradations"] = json::array();
    for (std::size_t i = 0; i < plan.degradations.size(); ++i) {
      DegradationSpec spec = plan.degradations[i];
      spec.seed += static_cast<std::uint64_t>(rep);
      rep_report["seeds"]["degradations"].push_back(spec.seed);
      const std::string tag = "deg" + std::to_string(i) + "_" + spec.type_name();
      const fs::path deg_dir = rep_dir / tag;
      fs::create_directories(deg_dir);
      std::cerr << "[rep " << rep << "] " << tag << "...\n";

      DegradeResult degraded = stage(tag + "/degrade", [&] {
        return degrade_and_record(data.cube, spec, deg_dir / "metadata.json");
      });
      stage(tag + "/degrade", [&] {
        write_cube(degraded.cube, deg_dir / "cube.hsi");
        write_labels(data.labels, deg_dir / "labels.lbl");
        export_preview(degraded.cube, preview[0], preview[1], preview[2],
                       deg_dir / "preview.ppm");
      });

      std::vector<std::uint16_t> frozen_preds;
      const Metrics base = stage(tag + "/eval", [&] {
        return eval_frozen(trained.model, degraded.cube, data.labels, trained.split,
                           plan.sstc.batch, &frozen_preds);
      });
      stage(tag + "/eval", [&] {
        write_predictions(deg_dir / "preds_unadapted.bin", frozen_preds);
      });

      // Adapt on a fresh copy so each branch starts from the pretrained model.
      AdaptConfig adapt_cfg = plan.adapt;
      adapt_cfg.seed = plan.adapt.seed + static_cast<std::uint64_t>(rep);
      SstcModel replica = trained.model;
      const AdaptOutcome adapted = stage(tag + "/adapt", [&] {
        return adapt_pipeline(replica, degraded.cube, data.labels, trained.split,
                              adapt_cfg);
      });
      stage(tag + "/adapt", [&] {
        write_predictions(deg_dir / "preds_adapted.bin", adapted.result.predictions);
        write_text(deg_dir / "adapt_report.json",
                   adapted.result.report.to_json().dump(2) + "\n");
      });

      DegRow row;
      row.repeat = rep;
      row.index = static_cast<int>(i);
      row.type = spec.type_name();
      row.params = degradation_metadata(degraded.record).at("params");
      row.unadapted = base;
      row.adapted = adapted.metrics;
      json eval_json{{"repeat", rep},
                     {"index", row.index},
                     {"type", row.type},
                     {"params", row.params},
                     {"seed", spec.seed},
                     {"unadapted", metrics_brief(base)},
                     {"adapted", metrics_brief(adapted.metrics)},
                     {"delta_oa", adapted.metrics.oa - base.oa}};
      stage(tag + "/eval", [&] {
        write_text(deg_dir / "eval.json", eval_json.dump(2) + "\n");
      });
      rep_report["degradations"].push_back(eval_json);
      result.rows.push_back(std::move(row));
      std::cerr << "  OA " << fixed2(base.oa * 100) << "% -> "
                << fixed2(adapted.metrics.oa * 100) << "%\n";
    }

    report["repeats"].push_back(std::move(rep_report));
  }

  result.csv_path = root / "results.csv";
  result.md_path = root / "results.md";
  result.report_path = root / "report.json";
  stage("report", [&] {
    write_text(result.csv_path, results_csv(result.rows));
    write_text(result.md_path, results_markdown(result.rows));
    write_text(result.report_path, report.dump(2) + "\n");
  });
  result.report = std::move(report);
  return result;
}

void rebuild_reports(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  for (const auto& rep_entry : fs::directory_iterator(dir)) {
    if (!rep_entry.is_directory()) continue;
    for (const auto& deg_entry : fs::directory_iterator(rep_entry.path())) {
      const fs::path f = deg_entry.path() / "eval.json";
      if (deg_entry.is_directory() && fs::exists(f)) files.push_back(f);
    }
  }
  if (files.empty()) throw DataError("no eval.json files under " + dir.string());

  std::vector<DegRow> rows;
  for (const fs::path& f : files) {
    std::ifstream in(f);
    json j;
    try {
      in >> j;
      DegRow row;
      row.repeat = j.value("repeat", 0);
      row.index = j.value("index", 0);
      row.type = j.at("type").get<std::string>();
      row.params = j.at("params");
      row.unadapted.oa = j.at("unadapted").at("oa").get<double>();
      row.unadapted.aa = j.at("unadapted").at("aa").get<double>();
      row.unadapted.kappa = j.at("unadapted").at("kappa").get<double>();
      row.adapted.oa = j.at("adapted").at("oa").get<double>();
      row.adapted.aa = j.at("adapted").at("aa").get<double>();
      row.adapted.kappa = j.at("adapted").at("kappa").get<double>();
      rows.push_back(std::move(row));
    } catch (const json::exception& e) {
      throw DataError(f.string() + ": " + e.what());
    }
  }
  std::sort(rows.begin(), rows.end(), [](const DegRow& a, const DegRow& b) {
    return std::tie(a.repeat, a.index) < std::tie(b.repeat, b.index);
  });
  write_text(dir / "results.csv", results_csv(rows));
  write_text(dir / "results.md", results_markdown(rows));
}

}  // namespace hypertta
