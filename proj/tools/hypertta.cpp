#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hypertta/cela.hpp"
#include "hypertta/common.hpp"
#include "hypertta/degrade.hpp"
#include "hypertta/experiment.hpp"
#include "hypertta/io.hpp"
#include "hypertta/metrics.hpp"
#include "hypertta/parallel.hpp"
#include "hypertta/rng.hpp"
#include "hypertta/sstc.hpp"
#include "hypertta/synth.hpp"

namespace {

using hypertta::ConfigError;
using hypertta::DataError;
using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// Output paths may name directories that do not exist yet.
std::filesystem::path ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  return path;
}

std::array<int, 3> parse_bands(const std::string& s) {
  std::array<int, 3> b{};
  if (std::sscanf(s.c_str(), "%d,%d,%d", &b[0], &b[1], &b[2]) != 3) {
    throw ConfigError("--preview expects r,g,b band indices, got \"" + s + "\"");
  }
  return b;
}

std::array<int, 3> default_preview(const hypertta::HsiCube& cube) {
  if (cube.wavelengths_nm) {
    std::array<int, 3> out{};
    const std::array<double, 3> targets{650.0, 550.0, 470.0};
    for (int ch = 0; ch < 3; ++ch) {
      int best = 0;
      for (int c = 1; c < cube.bands; ++c) {
        if (std::abs((*cube.wavelengths_nm)[c] - targets[ch]) <
            std::abs((*cube.wavelengths_nm)[best] - targets[ch])) {
          best = c;
        }
      }
      out[ch] = best;
    }
    return out;
  }
  return {cube.bands - 1, cube.bands / 2, 0};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral degradation benchmark: train a patch classifier, "
               "corrupt cubes, adapt at test time, report OA/AA/Kappa"};
  app.require_subcommand(1);

  // ---- gen ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Generate a synthetic labeled cube");
  std::string gen_out, gen_spec_path, gen_preview;
  hypertta::SyntheticSpec gen_spec;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--spec", gen_spec_path, "Spec JSON (flags override it)");
  auto* gh = gen->add_option("--height", gen_spec.height);
  auto* gw = gen->add_option("--width", gen_spec.width);
  auto* gb = gen->add_option("--bands", gen_spec.bands);
  auto* gk = gen->add_option("--classes", gen_spec.classes);
  auto* gs = gen->add_option("--sites", gen_spec.sites);
  auto* gn = gen->add_option("--noise", gen_spec.spectral_noise);
  auto* gseed = gen->add_option("--seed", gen_spec.seed);
  gen->add_option("--preview", gen_preview, "Preview bands r,g,b");
  gen->callback([&] {
    hypertta::SyntheticSpec spec;
    if (!gen_spec_path.empty()) spec = hypertta::SyntheticSpec::from_json(read_json_file(gen_spec_path));
    if (gh->count()) spec.height = gen_spec.height;
    if (gw->count()) spec.width = gen_spec.width;
    if (gb->count()) spec.bands = gen_spec.bands;
    if (gk->count()) spec.classes = gen_spec.classes;
    if (gs->count()) spec.sites = gen_spec.sites;
    if (gn->count()) spec.spectral_noise = gen_spec.spectral_noise;
    if (gseed->count()) spec.seed = gen_spec.seed;
    auto [cube, labels] = hypertta::gen_synthetic(spec);
    std::filesystem::create_directories(gen_out);
    const std::filesystem::path dir = gen_out;
    hypertta::write_cube(cube, dir / "clean.hsi");
    hypertta::write_labels(labels, dir / "labels.lbl");
    write_json_file(dir / "spec.json", spec.to_json());
    const auto bands = gen_preview.empty() ? default_preview(cube) : parse_bands(gen_preview);
    hypertta::export_preview(cube, bands[0], bands[1], bands[2], dir / "preview.ppm");
    std::cout << "wrote " << (dir / "clean.hsi").string() << " (" << cube.height << "x"
              << cube.width << "x" << cube.bands << ", " << labels.num_classes()
              << " classes)\n";
  });

  // ---- degrade ------------------------------------------------------------
  auto* deg = app.add_subcommand("degrade", "Apply one degradation operator");
  std::string deg_in, deg_out, deg_type, deg_meta_in, deg_meta_out, deg_preview;
  std::uint64_t deg_seed = 0;
  double p_q = 110.0, p_sigma = 0.0, p_sigma_max = 0.0, p_snr = 0.0, p_eps = 1e-6,
         p_density = 0.0, p_omega = 0.0;
  int p_a = 0, p_b = 0, p_k = 3;
  deg->add_option("--in", deg_in, "Input cube (.hsi)")->required();
  deg->add_option("--out", deg_out, "Output cube (.hsi)")->required();
  deg->add_option("--type", deg_type,
                  "jpeg|zero_mean_gaussian|additive_gaussian|poisson|salt_pepper|"
                  "stripe|deadline|mean_blur|fog");
  deg->add_option("--from-meta", deg_meta_in, "Replay a recorded metadata JSON");
  deg->add_option("--seed", deg_seed);
  deg->add_option("--q", p_q, "jpeg quality");
  deg->add_option("--sigma", p_sigma, "gaussian std");
  deg->add_option("--sigma-max", p_sigma_max, "per-band std upper bound");
  deg->add_option("--snr-db", p_snr, "poisson target SNR");
  deg->add_option("--eps-div", p_eps, "poisson division guard");
  deg->add_option("--p", p_density, "salt-pepper density");
  deg->add_option("--a", p_a, "count lower bound");
  deg->add_option("--b", p_b, "count upper bound (exclusive)");
  deg->add_option("--k", p_k, "blur kernel size");
  deg->add_option("--omega", p_omega, "fog scattering coefficient");
  deg->add_option("--meta", deg_meta_out, "Metadata path (default <out>.meta.json)");
  deg->add_option("--preview", deg_preview, "Also write a PPM, bands r,g,b");
  deg->callback([&] {
    hypertta::HsiCube cube = hypertta::read_cube(deg_in);
    if (!cube.normalized) {
      std::cerr << "input not in [0,1]; applying per-band min-max normalization\n";
      cube = hypertta::normalize_bands(cube).cube;
    }
    hypertta::DegradationSpec spec;
    if (!deg_meta_in.empty()) {
      spec = hypertta::spec_from_metadata(read_json_file(deg_meta_in));
    } else if (!deg_type.empty()) {
      if (deg_type == "jpeg") {
        spec.params = hypertta::JpegParams{p_q};
      } else if (deg_type == "zero_mean_gaussian") {
        spec.params = hypertta::ZeroMeanGaussianParams{p_sigma};
      } else if (deg_type == "additive_gaussian") {
        spec.params = hypertta::AdditiveGaussianParams{p_sigma_max};
      } else if (deg_type == "poisson") {
        spec.params = hypertta::PoissonParams{p_snr, p_eps};
      } else if (deg_type == "salt_pepper") {
        spec.params = hypertta::SaltPepperParams{p_density};
      } else if (deg_type == "stripe") {
        spec.params = hypertta::StripeParams{p_a, p_b};
      } else if (deg_type == "deadline") {
        spec.params = hypertta::DeadlineParams{p_a, p_b};
      } else if (deg_type == "mean_blur") {
        spec.params = hypertta::MeanBlurParams{p_k};
      } else if (deg_type == "fog") {
        spec.params = hypertta::FogParams{p_omega};
      } else {
        throw ConfigError("unknown degradation type \"" + deg_type + "\"");
      }
      spec.seed = deg_seed;
    } else {
      throw ConfigError("degrade needs --type or --from-meta");
    }
    std::filesystem::path meta = deg_meta_out.empty()
                                     ? std::filesystem::path(deg_out).replace_extension(
                                           ".meta.json")
                                     : std::filesystem::path(deg_meta_out);
    hypertta::DegradeResult result =
        hypertta::degrade_and_record(cube, spec, ensure_parent(meta));
    hypertta::write_cube(result.cube, ensure_parent(deg_out));
    if (!deg_preview.empty()) {
      const auto bands = parse_bands(deg_preview);
      hypertta::export_preview(result.cube, bands[0], bands[1], bands[2],
                               std::filesystem::path(deg_out).replace_extension(".ppm"));
    }
    std::cout << "wrote " << deg_out << " (" << spec.type_name() << ", seed " << spec.seed
              << "), metadata " << meta.string() << "\n";
    for (const std::string& w : result.record.warnings) std::cerr << "warning: " << w << "\n";
  });

  // ---- train --------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train the patch classifier");
  std::string train_data, train_config, train_out, train_report_path;
  train->add_option("--data", train_data, "Directory with one .hsi and one .lbl")->required();
  train->add_option("--config", train_config, "Config JSON")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--report", train_report_path, "Also write the train report JSON");
  train->callback([&] {
    const json cfg_json = read_json_file(train_config);
    hypertta::SstcConfig cfg = hypertta::SstcConfig::from_json(
        cfg_json.contains("sstc") ? cfg_json.at("sstc") : cfg_json);
    const double fraction = cfg_json.value("train_fraction", 0.2);
    const std::uint64_t split_seed =
        cfg_json.value("split_seed", cfg_json.value("seed", std::uint64_t{1}));
    hypertta::Dataset data = hypertta::load_dataset_dir(train_data);
    if (!data.cube.normalized) {
      std::cerr << "input not in [0,1]; applying per-band min-max normalization\n";
      data.cube = hypertta::normalize_bands(data.cube).cube;
    }
    hypertta::TrainedModel trained =
        hypertta::train_pipeline(data.cube, data.labels, cfg, fraction, split_seed);
    hypertta::save_checkpoint(trained.model, ensure_parent(train_out),
                              hypertta::split_extra(trained.split, data.cube.digest()));
    if (!train_report_path.empty()) {
      write_json_file(ensure_parent(train_report_path), trained.report.to_json());
    }
    std::cout << "checkpoint " << train_out << "\n";
    if (!trained.report.epoch_loss.empty()) {
      std::cout << "final loss " << trained.report.epoch_loss.back() << ", train accuracy "
                << trained.report.epoch_accuracy.back() << "\n";
    }
  });

  // ---- adapt --------------------------------------------------------------
  auto* adapt = app.add_subcommand("adapt", "Test-time adaptation on a degraded cube");
  std::string adapt_model, adapt_data, adapt_out, adapt_report_path, adapt_reset = "per_run";
  hypertta::AdaptConfig acfg;
  adapt->add_option("--model", adapt_model, "Checkpoint")->required();
  adapt->add_option("--data", adapt_data, "Directory with one .hsi and one .lbl")->required();
  adapt->add_option("--tau", acfg.tau, "Confidence threshold");
  adapt->add_option("--top", acfg.top_fraction, "Top-k fallback fraction");
  adapt->add_option("--lr", acfg.lr, "SGD rate on LayerNorm affine params");
  adapt->add_option("--steps", acfg.steps, "Gradient steps per batch");
  adapt->add_option("--batch", acfg.batch, "Batch size");
  adapt->add_option("--reset", adapt_reset, "per_run|per_batch");
  adapt->add_option("--seed", acfg.seed, "Stream shuffle seed");
  adapt->add_option("--out", adapt_out, "Predictions (u16le, stream order)")->required();
  adapt->add_option("--report", adapt_report_path, "Report JSON")->required();
  adapt->callback([&] {
    acfg.reset = hypertta::reset_mode_from_string(adapt_reset);
    json extra;
    hypertta::SstcModel model = hypertta::load_checkpoint(adapt_model, &extra);
    hypertta::Dataset data = hypertta::load_dataset_dir(adapt_data);
    if (!data.cube.normalized) {
      std::cerr << "input not in [0,1]; applying per-band min-max normalization\n";
      data.cube = hypertta::normalize_bands(data.cube).cube;
    }
    if (data.cube.bands != model.config.bands) {
      throw DataError("cube has " + std::to_string(data.cube.bands) + " bands, model wants " +
                      std::to_string(model.config.bands));
    }
    if (data.labels.num_classes() != model.config.classes) {
      throw DataError("label map declares " + std::to_string(data.labels.num_classes()) +
                      " classes, model wants " + std::to_string(model.config.classes));
    }
    if (!extra.contains("split")) {
      throw ConfigError("checkpoint lacks the split record needed to pick target pixels");
    }
    hypertta::SplitSpec split = hypertta::stratified_split(
        data.labels, extra.at("split").at("train_fraction").get<double>(),
        extra.at("split").at("seed").get<std::uint64_t>());
    hypertta::AdaptOutcome outcome =
        hypertta::adapt_pipeline(model, data.cube, data.labels, split, acfg);
    hypertta::write_predictions(ensure_parent(adapt_out), outcome.result.predictions);
    json report = outcome.result.report.to_json();
    report["stream"] = json{{"shuffle_seed", acfg.seed},
                            {"count", outcome.stream_pixels.size()},
                            {"split", extra.at("split")}};
    report["metrics"] = json{{"oa", outcome.metrics.oa},
                             {"aa", outcome.metrics.aa},
                             {"kappa", outcome.metrics.kappa}};
    write_json_file(ensure_parent(adapt_report_path), report);
    std::cout << "predictions " << adapt_out << "\n";
    std::cout << "adapted OA " << outcome.metrics.oa << ", AA " << outcome.metrics.aa
              << ", Kappa " << outcome.metrics.kappa << "\n";
  });

  // ---- eval ---------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Score predictions (or the frozen model)");
  std::string ev_model, ev_data, ev_preds, ev_adapt_report, ev_out;
  std::uint64_t ev_shuffle_seed = 0;
  ev->add_option("--model", ev_model, "Checkpoint")->required();
  ev->add_option("--data", ev_data, "Directory with one .hsi and one .lbl")->required();
  ev->add_option("--preds", ev_preds, "Predictions file; omit to run the frozen model");
  ev->add_option("--adapt-report", ev_adapt_report,
                 "Adapt report JSON; supplies the stream shuffle seed");
  ev->add_option("--shuffle-seed", ev_shuffle_seed, "Stream shuffle seed for --preds");
  ev->add_option("--out", ev_out, "Metrics JSON")->required();
  ev->callback([&] {
    json extra;
    hypertta::SstcModel model = hypertta::load_checkpoint(ev_model, &extra);
    hypertta::Dataset data = hypertta::load_dataset_dir(ev_data);
    if (!data.cube.normalized) data.cube = hypertta::normalize_bands(data.cube).cube;
    if (!extra.contains("split")) {
      throw ConfigError("checkpoint lacks the split record needed to pick target pixels");
    }
    hypertta::SplitSpec split = hypertta::stratified_split(
        data.labels, extra.at("split").at("train_fraction").get<double>(),
        extra.at("split").at("seed").get<std::uint64_t>());
    hypertta::Metrics metrics = [&] {
      if (ev_preds.empty()) {
        return hypertta::eval_frozen(model, data.cube, data.labels, split,
                                     model.config.batch);
      }
      std::uint64_t seed = ev_shuffle_seed;
      if (!ev_adapt_report.empty()) {
        seed = read_json_file(ev_adapt_report)
                   .at("stream")
                   .at("shuffle_seed")
                   .get<std::uint64_t>();
      }
      std::vector<std::int64_t> pixels = split.pixels(hypertta::SplitTag::Target);
      hypertta::RngStream rng(seed, 0x41445054u, 0);  // same tag as the adapt stream
      rng.shuffle(pixels);
      const std::vector<std::uint16_t> preds = hypertta::read_predictions(ev_preds);
      if (preds.size() != pixels.size()) {
        throw DataError("predictions hold " + std::to_string(preds.size()) +
                        " entries, target split has " + std::to_string(pixels.size()));
      }
      std::vector<int> pred_ids(preds.begin(), preds.end());
      return hypertta::evaluate(pred_ids, hypertta::labels_at(data.labels, pixels),
                                model.config.classes);
    }();
    write_json_file(ensure_parent(ev_out), metrics.to_json());
    std::cout << "OA " << metrics.oa << ", AA " << metrics.aa << ", Kappa " << metrics.kappa
              << "\n";
    for (const std::string& w : metrics.warnings) std::cerr << "warning: " << w << "\n";
  });

  // ---- report -------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "Rebuild results.csv/.md from eval files");
  std::string rep_dir;
  rep->add_option("--dir", rep_dir, "Experiment output directory")->required();
  rep->callback([&] {
    hypertta::rebuild_reports(rep_dir);
    std::cout << "rebuilt " << (std::filesystem::path(rep_dir) / "results.csv").string()
              << " and results.md\n";
  });

  // ---- run ----------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Run a full experiment plan");
  std::string run_plan, run_out;
  int run_repeats = 0;
  std::uint64_t run_seed = 0;
  auto* run_seed_opt = run->add_option("--seed", run_seed, "Override the plan seed");
  run->add_option("--plan", run_plan, "Plan JSON; omit for the default benchmark");
  run->add_option("--out", run_out, "Override the plan output directory");
  run->add_option("--repeats", run_repeats, "Override the plan repeat count");
  run->callback([&] {
    json plan_json = run_plan.empty() ? json::object() : read_json_file(run_plan);
    if (run_seed_opt->count()) plan_json["seed"] = run_seed;
    if (!run_out.empty()) plan_json["output_dir"] = run_out;
    if (run_repeats > 0) plan_json["repeats"] = run_repeats;
    const hypertta::ExperimentPlan plan = hypertta::ExperimentPlan::from_json(plan_json);
    const hypertta::ExperimentResult result = hypertta::run_experiment(plan);
    std::cout << "results: " << result.csv_path.string() << "\n";
    std::cout << result.md_path.string() << "\n";
    std::cout << result.report_path.string() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad usage is a config error
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const hypertta::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const hypertta::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
