#include "hypertta/synth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hypertta/common.hpp"
#include "hypertta/parallel.hpp"
#include "hypertta/rng.hpp"

namespace hypertta {

namespace {

using nlohmann::json;

constexpr std::uint32_t kSiteTag = 0x53495445;   // site placement
constexpr std::uint32_t kPixelTag = 0x50495845;  // per-pixel perturbation
constexpr std::uint32_t kCellTag = 0x43454C4C;   // per-cell spectral offsets
constexpr std::uint32_t kShadeTag = 0x53484144;  // illumination field

// Two-bump reflectance-like curve for class k: a strong primary peak whose
// wavelength walks across the range with k, plus a weaker secondary bump.
double class_curve(int k, int classes, double lambda, double lo, double hi) {
  const double span = hi - lo;
  const double primary = lo + (k + 0.5) / classes * span;
  const double secondary = lo + (std::fmod(k + 0.5 + classes / 2.0, classes)) / classes * span;
  const double sigma = span / (2.5 * classes);
  const double s1 = (lambda - primary) / sigma;
  const double s2 = (lambda - secondary) / (2.0 * sigma);
  return 0.2 + 0.55 * std::exp(-0.5 * s1 * s1) + 0.15 * std::exp(-0.5 * s2 * s2);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (height < 1 || width < 1 || bands < 1) throw ConfigError("synthetic: empty dimensions");
  if (classes < 2) throw ConfigError("synthetic: need at least two classes");
  if (site_count() < classes) throw ConfigError("synthetic: fewer sites than classes");
  if (site_count() > height * width) throw ConfigError("synthetic: more sites than pixels");
  if (!(wavelength_hi_nm > wavelength_lo_nm)) {
    throw ConfigError("synthetic: wavelength range must be increasing");
  }
  if (spectral_noise < 0.0) throw ConfigError("synthetic: noise scale must be nonnegative");
}

json SyntheticSpec::to_json() const {
  return json{{"height", height},
              {"width", width},
              {"bands", bands},
              {"classes", classes},
              {"sites", sites},
              {"wavelength_lo_nm", wavelength_lo_nm},
              {"wavelength_hi_nm", wavelength_hi_nm},
              {"spectral_noise", spectral_noise},
              {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  SyntheticSpec s;
  try {
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.bands = j.value("bands", s.bands);
    s.classes = j.value("classes", s.classes);
    s.sites = j.value("sites", s.sites);
    s.wavelength_lo_nm = j.value("wavelength_lo_nm", s.wavelength_lo_nm);
    s.wavelength_hi_nm = j.value("wavelength_hi_nm", s.wavelength_hi_nm);
    s.spectral_noise = j.value("spectral_noise", s.spectral_noise);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError("synthetic spec: " + std::string(e.what()));
  }
  return s;
}

std::pair<HsiCube, LabelMap> gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int H = spec.height;
  const int W = spec.width;
  const int C = spec.bands;
  const int K = spec.classes;
  const std::int64_t pixels = static_cast<std::int64_t>(H) * W;
  const int nsites = spec.site_count();

  // Distinct site positions; site i serves class i mod K so every class
  // owns at least one cell (its site pixel is uniquely nearest to itself).
  RngStream site_rng(spec.seed, kSiteTag, 0);
  const std::vector<std::int64_t> flat = site_rng.sample_without_replacement(pixels, nsites);
  std::vector<int> site_row(nsites), site_col(nsites), site_class(nsites);
  for (int i = 0; i < nsites; ++i) {
    site_row[i] = static_cast<int>(flat[i] / W);
    site_col[i] = static_cast<int>(flat[i] % W);
    site_class[i] = i % K;
  }

  LabelMap labels;
  labels.height = H;
  labels.width = W;
  labels.labels.resize(static_cast<std::size_t>(pixels));
  for (int k = 0; k < K; ++k) labels.class_names.push_back("class" + std::to_string(k));
  parallel_for(pixels, [&](std::int64_t p) {
    const int r = static_cast<int>(p / W);
    const int c = static_cast<int>(p % W);
    std::int64_t best = -1;
    int best_site = 0;
    for (int i = 0; i < nsites; ++i) {
      const std::int64_t dr = r - site_row[i];
      const std::int64_t dc = c - site_col[i];
      const std::int64_t d2 = dr * dr + dc * dc;
      if (best < 0 || d2 < best) {  // ties keep the lower site index
        best = d2;
        best_site = i;
      }
    }
    labels.labels[static_cast<std::size_t>(p)] =
        static_cast<std::uint16_t>(site_class[best_site] + 1);  // map ids are 1..K
  });

  std::vector<double> wavelengths(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    wavelengths[static_cast<std::size_t>(c)] =
        C == 1 ? spec.wavelength_lo_nm
               : spec.wavelength_lo_nm +
                     (spec.wavelength_hi_nm - spec.wavelength_lo_nm) * c / (C - 1);
  }
  std::vector<double> curves(static_cast<std::size_t>(K) * C);
  for (int k = 0; k < K; ++k) {
    for (int c = 0; c < C; ++c) {
      curves[static_cast<std::size_t>(k) * C + c] =
          class_curve(k, K, wavelengths[static_cast<std::size_t>(c)], spec.wavelength_lo_nm,
                      spec.wavelength_hi_nm);
    }
  }

  HsiCube cube = HsiCube::zeros(H, W, C);
  cube.wavelengths_nm = wavelengths;
  // Perturbation: band-smoothed gaussian draw (window 5, reflect) plus a
  // light white component, one stream per pixel so band order is stable.
  const int win = std::min(5, C);
  const int half = win / 2;
  parallel_for(pixels, [&](std::int64_t p) {
    RngStream rng(spec.seed, kPixelTag, static_cast<std::uint32_t>(p));
    const double* curve =
        curves.data() + (labels.labels[static_cast<std::size_t>(p)] - 1) * C;
    std::vector<double> raw(static_cast<std::size_t>(C));
    for (double& v : raw) v = rng.next_gaussian();
    for (int c = 0; c < C; ++c) {
      double smooth = 0.0;
      for (int d = -half; d <= half; ++d) {
        int idx = c + d;
        if (idx < 0) idx = -idx;
        if (idx >= C) idx = 2 * C - 2 - idx;
        smooth += raw[static_cast<std::size_t>(idx)];
      }
      smooth /= static_cast<double>(win);
      const double white = 0.3 * rng.next_gaussian();
      const double v = curve[c] + spec.spectral_noise * (smooth + white);
      cube.data[static_cast<std::size_t>(c) * pixels + p] =
          static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  });
  cube.normalized = true;
  return {std::move(cube), std::move(labels)};
}

}  // namespace hypertta
