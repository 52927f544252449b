#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "hypertta/common.hpp"
#include "hypertta/degrade.hpp"
#include "hypertta/experiment.hpp"
#include "hypertta/io.hpp"
#include "hypertta/synth.hpp"

using namespace hypertta;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hypertta_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DegradationSpec spec_of(const json& meta) { return spec_from_metadata(meta); }

ExperimentPlan small_plan(const fs::path& outdir) {
  ExperimentPlan plan;
  plan.synthetic->height = 20;
  plan.synthetic->width = 20;
  plan.synthetic->bands = 6;
  plan.synthetic->classes = 3;
  plan.synthetic->sites = 6;
  plan.synthetic->spectral_noise = 0.04;
  plan.synthetic->seed = 5;
  plan.train_fraction = 0.3;
  plan.sstc.patch_size = 3;
  plan.sstc.branch_kernels = {3};
  plan.sstc.branch_dims = {8};
  plan.sstc.heads = 2;
  plan.sstc.layers = 1;
  plan.sstc.epochs = 2;
  plan.sstc.batch = 32;
  plan.sstc.seed = 9;
  plan.adapt.batch = 32;
  plan.degradations = {
      spec_of(json{{"type", "zero_mean_gaussian"}, {"params", {{"sigma", 1e-12}}}, {"seed", 1}}),
      spec_of(json{{"type", "stripe"}, {"params", {{"a", 3}, {"b", 5}}}, {"seed", 2}}),
  };
  plan.output_dir = outdir;
  plan.seed = 7;
  return plan;
}

}  // namespace

TEST_SUITE_BEGIN("experiment");

TEST_CASE("synthetic scenes are deterministic, labeled, and wavelength-calibrated") {
  SyntheticSpec spec;
  spec.height = 24;
  spec.width = 18;
  spec.bands = 12;
  spec.classes = 4;
  spec.sites = 8;
  spec.seed = 42;

  auto [cube, labels] = gen_synthetic(spec);
  auto [cube2, labels2] = gen_synthetic(spec);
  CHECK(cube.data == cube2.data);
  CHECK(labels.labels == labels2.labels);

  CHECK(cube.height == 24);
  CHECK(cube.width == 18);
  CHECK(cube.bands == 12);
  CHECK(cube.normalized);
  REQUIRE(cube.wavelengths_nm.has_value());
  CHECK((*cube.wavelengths_nm).front() == doctest::Approx(430.0));
  CHECK((*cube.wavelengths_nm).back() == doctest::Approx(860.0));
  for (float v : cube.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  CHECK(labels.num_classes() == 4);
  std::vector<int> histogram(5, 0);
  for (std::uint16_t v : labels.labels) {
    REQUIRE(v >= 1);  // every pixel belongs to a region
    REQUIRE(v <= 4);
    histogram[v]++;
  }
  for (int k = 1; k <= 4; ++k) CHECK(histogram[static_cast<std::size_t>(k)] >= 1);

  SyntheticSpec other = spec;
  other.seed = 43;
  auto [cube3, labels3] = gen_synthetic(other);
  CHECK(cube.data != cube3.data);
}

TEST_CASE("two far-separated classes pass a nearest-mean oracle at 0.95 OA") {
  SyntheticSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.bands = 16;
  spec.classes = 2;
  spec.sites = 4;
  spec.spectral_noise = 0.05;
  spec.seed = 3;
  auto [cube, labels] = gen_synthetic(spec);

  // Class mean spectra from the labels, then nearest-mean classification.
  std::vector<std::vector<double>> means(2, std::vector<double>(16, 0.0));
  std::vector<std::int64_t> counts(2, 0);
  const std::size_t pixels = cube.pixel_count();
  for (std::size_t p = 0; p < pixels; ++p) {
    const int k = labels.labels[p] - 1;
    counts[static_cast<std::size_t>(k)]++;
    for (int b = 0; b < 16; ++b) {
      means[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)] += cube.band_ptr(b)[p];
    }
  }
  for (int k = 0; k < 2; ++k) {
    REQUIRE(counts[static_cast<std::size_t>(k)] > 0);
    for (double& v : means[static_cast<std::size_t>(k)]) {
      v /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
    }
  }
  std::int64_t correct = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    double d0 = 0.0, d1 = 0.0;
    for (int b = 0; b < 16; ++b) {
      const double v = cube.band_ptr(b)[p];
      d0 += (v - means[0][static_cast<std::size_t>(b)]) * (v - means[0][static_cast<std::size_t>(b)]);
      d1 += (v - means[1][static_cast<std::size_t>(b)]) * (v - means[1][static_cast<std::size_t>(b)]);
    }
    const int pred = d0 <= d1 ? 0 : 1;
    if (pred == labels.labels[p] - 1) correct++;
  }
  const double oa = static_cast<double>(correct) / static_cast<double>(pixels);
  CHECK(oa >= 0.95);
}

TEST_CASE("synthetic spec validation and serialization") {
  SyntheticSpec spec;
  CHECK_NOTHROW(spec.validate());
  CHECK(SyntheticSpec::from_json(spec.to_json()).to_json() == spec.to_json());

  SyntheticSpec bad = spec;
  bad.classes = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.sites = 2;  // fewer sites than classes
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.height = 2;
  bad.width = 2;
  bad.sites = 15;  // more sites than pixels
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.wavelength_hi_nm = bad.wavelength_lo_nm;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.spectral_noise = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("patches_at centers patches on pixels; labels_at shifts to model ids") {
  HsiCube cube = HsiCube::zeros(4, 5, 2);
  for (int b = 0; b < 2; ++b) {
    for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
      cube.band_ptr(b)[p] = static_cast<float>(b * 100 + static_cast<int>(p));
    }
  }
  const std::vector<std::int64_t> px = {0, 7, 19};
  const Tensor t = patches_at(cube, px, 3);
  REQUIRE(t.shape == std::vector<std::int64_t>({3, 2, 3, 3}));
  // Center of each patch equals the pixel value in each band.
  for (std::size_t i = 0; i < px.size(); ++i) {
    for (int b = 0; b < 2; ++b) {
      const double center =
          t.data[static_cast<std::size_t>(((static_cast<std::int64_t>(i) * 2 + b) * 3 + 1) * 3 + 1)];
      CHECK(center == static_cast<double>(b * 100 + px[i]));
    }
  }

  LabelMap labels;
  labels.height = 4;
  labels.width = 5;
  labels.class_names = {"a", "b", "c"};
  labels.labels.assign(20, 2);
  labels.labels[7] = 3;
  labels.labels[19] = 0;  // unlabeled
  CHECK(labels_at(labels, {0, 7}) == std::vector<int>{1, 2});
  CHECK_THROWS_AS(labels_at(labels, {19}), DataError);
}

TEST_CASE("dataset directories must hold exactly one cube and one label raster") {
  const fs::path dir = fresh_dir("dataset_dir");
  CHECK_THROWS_AS(load_dataset_dir(dir), DataError);  // empty
  CHECK_THROWS_AS(load_dataset_dir(dir / "nope"), DataError);

  SyntheticSpec spec;
  spec.height = 8;
  spec.width = 8;
  spec.bands = 3;
  spec.classes = 2;
  spec.sites = 4;
  auto [cube, labels] = gen_synthetic(spec);
  write_cube(cube, dir / "scene.hsi");
  write_labels(labels, dir / "gt.lbl");
  const Dataset ds = load_dataset_dir(dir);
  CHECK(ds.cube.data == cube.data);
  CHECK(ds.labels.labels == labels.labels);

  write_cube(cube, dir / "extra.hsi");
  CHECK_THROWS_AS(load_dataset_dir(dir), DataError);
}

TEST_CASE("preview export: payload layout, idempotence, stripe diff") {
  const fs::path dir = fresh_dir("preview");
  HsiCube tiny = HsiCube::zeros(1, 1, 3);
  tiny.data = {0.2f, 0.5f, 0.9f};
  tiny.normalized = true;
  export_preview(tiny, 0, 1, 2, dir / "tiny.ppm");
  const std::string bytes = slurp(dir / "tiny.ppm");
  const std::string header = "P6\n1 1\n255\n";
  REQUIRE(bytes.size() == header.size() + 3);
  CHECK(bytes.substr(0, header.size()) == header);
  // Constant bands span zero, so all three channels scale to 0.
  CHECK(bytes[header.size()] == '\0');

  export_preview(tiny, 0, 1, 2, dir / "tiny2.ppm");
  CHECK(slurp(dir / "tiny2.ppm") == bytes);
  CHECK_THROWS_AS(export_preview(tiny, 0, 1, 3, dir / "bad.ppm"), ConfigError);

  // Stripe preview: changed pixels are exactly the recorded columns.
  HsiCube flat = HsiCube::zeros(10, 16, 3);
  std::fill(flat.data.begin(), flat.data.end(), 0.2f);
  flat.normalized = true;
  const DegradeResult striped = apply_stripes(flat, 3, 5, 11);
  export_preview(flat, 0, 1, 2, dir / "clean.ppm");
  export_preview(striped.cube, 0, 1, 2, dir / "striped.ppm");
  const std::string a = slurp(dir / "clean.ppm");
  const std::string b = slurp(dir / "striped.ppm");
  REQUIRE(a.size() == b.size());
  const std::size_t off = std::string("P6\n16 10\n255\n").size();
  for (int ch = 0; ch < 3; ++ch) {
    std::set<int> diff_cols;
    for (int row = 0; row < 10; ++row) {
      for (int col = 0; col < 16; ++col) {
        const std::size_t i = off + (static_cast<std::size_t>(row) * 16 + col) * 3 +
                              static_cast<std::size_t>(ch);
        if (a[i] != b[i]) diff_cols.insert(col);
      }
    }
    const auto& recorded = striped.record.stripe_columns[static_cast<std::size_t>(ch)];
    CHECK(diff_cols == std::set<int>(recorded.begin(), recorded.end()));
  }
}

TEST_CASE("CSV rendering is fixed-format and comma-safe") {
  DegRow r1;
  r1.repeat = 0;
  r1.index = 5;
  r1.type = "stripe";
  r1.params = json{{"a", 8}, {"b", 11}};
  r1.unadapted.oa = 0.5;
  r1.unadapted.aa = 0.25;
  r1.unadapted.kappa = 0.125;
  r1.adapted.oa = 0.625;
  r1.adapted.aa = 0.5;
  r1.adapted.kappa = 0.25;
  DegRow r2 = r1;
  r2.type = "poisson";
  r2.index = 3;
  r2.params = json{{"snr_db", -10.0}, {"eps_div", 1e-6}};

  const std::string csv = results_csv({r1, r2});
  CHECK(csv == results_csv({r1, r2}));  // deterministic
  std::istringstream lines(csv);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line ==
        "repeat,index,type,params,oa_unadapted,aa_unadapted,kappa_unadapted,"
        "oa_adapted,aa_adapted,kappa_adapted,delta_oa");
  REQUIRE(std::getline(lines, line));
  CHECK(line == "0,5,stripe,a=8;b=11,0.500000,0.250000,0.125000,0.625000,0.500000,0.250000,0.125000");
  REQUIRE(std::getline(lines, line));
  // params render key=value joined by ';' with no commas anywhere
  CHECK(line.find("eps_div=") != std::string::npos);
  CHECK(std::count(line.begin(), line.end(), ',') == 10);

  const std::string md = results_markdown({r1, r2});
  CHECK(md.find("| stripe |") != std::string::npos);
  CHECK(md.find("ΔOA") != std::string::npos);
  CHECK(md.find("±") == std::string::npos);  // one value per index, no spread

  DegRow rep1 = r1;
  rep1.repeat = 1;
  rep1.adapted.oa = 0.7;
  const std::string spread = results_markdown({r1, rep1});
  CHECK(spread.find("±") != std::string::npos);
}

TEST_CASE("run_experiment produces the full artifact tree deterministically") {
  const fs::path out1 = fresh_dir("exp_run1");
  const ExperimentPlan plan = small_plan(out1);
  const ExperimentResult res = run_experiment(plan);

  REQUIRE(res.rows.size() == 2);
  for (const fs::path rel : {
           fs::path("plan.json"),
           fs::path("results.csv"),
           fs::path("results.md"),
           fs::path("report.json"),
           fs::path("rep0") / "clean.hsi",
           fs::path("rep0") / "clean.json",
           fs::path("rep0") / "labels.lbl",
           fs::path("rep0") / "clean.ppm",
           fs::path("rep0") / "model.ckpt",
           fs::path("rep0") / "train_report.json",
           fs::path("rep0") / "deg0_zero_mean_gaussian" / "cube.hsi",
           fs::path("rep0") / "deg0_zero_mean_gaussian" / "metadata.json",
           fs::path("rep0") / "deg0_zero_mean_gaussian" / "labels.lbl",
           fs::path("rep0") / "deg0_zero_mean_gaussian" / "preview.ppm",
           fs::path("rep0") / "deg0_zero_mean_gaussian" / "preds_unadapted.bin",
           fs::path("rep0") / "deg0_zero_mean_gaussian" / "preds_adapted.bin",
           fs::path("rep0") / "deg0_zero_mean_gaussian" / "adapt_report.json",
           fs::path("rep0") / "deg0_zero_mean_gaussian" / "eval.json",
           fs::path("rep0") / "deg1_stripe" / "eval.json",
       }) {
    CAPTURE(rel.string());
    CHECK(fs::exists(out1 / rel));
  }

  // Identity degradation: frozen metrics within half a point of clean.
  const json report = json::parse(slurp(out1 / "report.json"));
  const double clean_oa = report.at("repeats")[0].at("clean").at("oa").get<double>();
  CHECK(std::abs(res.rows[0].unadapted.oa - clean_oa) <= 0.005);
  CHECK(report.at("repeats")[0].at("split_audit").at("disjoint").get<bool>());

  // Each degradation directory is itself a loadable dataset dir.
  const Dataset deg_ds = load_dataset_dir(out1 / "rep0" / "deg1_stripe");
  CHECK(deg_ds.cube.height == 20);

  // Byte determinism: a second identical run reproduces every key artifact.
  const fs::path out2 = fresh_dir("exp_run2");
  ExperimentPlan again = small_plan(out2);
  run_experiment(again);
  CHECK(slurp(out2 / "results.csv") == slurp(out1 / "results.csv"));
  CHECK(slurp(out2 / "results.md") == slurp(out1 / "results.md"));
  CHECK(slurp(out2 / "rep0" / "clean.hsi") == slurp(out1 / "rep0" / "clean.hsi"));
  CHECK(slurp(out2 / "rep0" / "model.ckpt") == slurp(out1 / "rep0" / "model.ckpt"));
  CHECK(slurp(out2 / "rep0" / "deg1_stripe" / "cube.hsi") ==
        slurp(out1 / "rep0" / "deg1_stripe" / "cube.hsi"));
  CHECK(slurp(out2 / "rep0" / "deg1_stripe" / "preds_adapted.bin") ==
        slurp(out1 / "rep0" / "deg1_stripe" / "preds_adapted.bin"));

  // rebuild_reports regenerates identical tables from eval.json files alone.
  const std::string csv_before = slurp(out1 / "results.csv");
  fs::remove(out1 / "results.csv");
  fs::remove(out1 / "results.md");
  rebuild_reports(out1);
  CHECK(slurp(out1 / "results.csv") == csv_before);

  CHECK_THROWS_AS(rebuild_reports(fresh_dir("exp_empty")), DataError);
}

TEST_CASE("plan json round-trips and resolves the default degradation list") {
  ExperimentPlan plan = small_plan("unused_dir");
  const json j = plan.to_json();
  const ExperimentPlan back = ExperimentPlan::from_json(j);
  CHECK(back.to_json() == j);

  const ExperimentPlan defaults = ExperimentPlan::from_json(json{{"seed", 4}});
  REQUIRE(defaults.degradations.size() == 9);
  CHECK(defaults.degradations[0].type_name() == "jpeg");
  CHECK(defaults.degradations[5].type_name() == "stripe");
  CHECK(defaults.degradations[5].seed == 4);
  const ExperimentPlan named =
      ExperimentPlan::from_json(json{{"degradations", "default"}, {"stripe_min", 5}});
  REQUIRE(named.degradations.size() == 9);

  ExperimentPlan bad = plan;
  bad.degradations.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = plan;
  bad.train_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = plan;
  bad.preview = {1, 2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = plan;
  bad.repeats = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_SUITE_END();
