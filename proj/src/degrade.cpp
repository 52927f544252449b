#include "hypertta/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "hypertta/common.hpp"
#include "hypertta/parallel.hpp"
#include "hypertta/rng.hpp"

namespace hypertta {

namespace {

using nlohmann::json;

// RNG stream tags, one per operator; fixed forever for replayability.
enum StreamTag : std::uint32_t {
  kTagJpeg = 1,
  kTagZeroMeanGaussian = 2,
  kTagAdditiveGaussian = 3,
  kTagPoisson = 4,
  kTagSaltPepper = 5,
  kTagStripes = 6,
  kTagDeadlines = 7,
  kTagMeanBlur = 8,
  kTagFog = 9,
};
// Lane for randomness that is spatial rather than per-band (the fog field).
constexpr std::uint32_t kFieldLane = 0xFFFFFFFFu;

void require_normalized(const HsiCube& cube) {
  cube.validate();
  if (!cube.normalized) {
    throw ConfigError("degradation operators require a normalized cube (values in [0,1])");
  }
}

DegradeResult make_result(const HsiCube& source, DegradeParams params, std::uint64_t seed) {
  DegradeResult result;
  result.cube = source;
  result.record.spec.params = std::move(params);
  result.record.spec.seed = seed;
  result.record.source_digest = source.digest();
  return result;
}

inline float clip01(double v) {
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

inline int reflect_index(int x, int len) {
  if (x < 0) return -x;
  if (x >= len) return 2 * len - 2 - x;
  return x;
}

// Same-size k x k mean filter with reflect padding, double accumulation.
template <typename T>
void mean_filter_reflect(const T* src, T* dst, int h, int w, int k) {
  const int half = k / 2;
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double sum = 0.0;
      for (int dr = -half; dr <= half; ++dr) {
        const int rr = reflect_index(r + dr, h);
        const T* row = src + static_cast<std::size_t>(rr) * w;
        for (int dc = -half; dc <= half; ++dc) {
          sum += static_cast<double>(row[reflect_index(c + dc, w)]);
        }
      }
      dst[static_cast<std::size_t>(r) * w + c] = static_cast<T>(sum * inv);
    }
  }
}

// ---- JPEG ----

const int kLumaQuant[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

std::vector<int> scaled_quant_table(double quality) {
  const double scale = quality < 50.0 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  std::vector<int> table(64);
  for (int i = 0; i < 64; ++i) {
    const int v = static_cast<int>(std::floor((kLumaQuant[i] * scale + 50.0) / 100.0));
    table[i] = std::clamp(v, 1, 255);
  }
  return table;
}

struct DctBasis {
  double a[8][8];
  DctBasis() {
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? 1.0 / std::numbers::sqrt2 : 1.0;
      for (int x = 0; x < 8; ++x) {
        a[u][x] = 0.5 * cu * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);
      }
    }
  }
};

// Orthonormal F = A f A^T and back, on one 8x8 block.
void dct_block(const DctBasis& basis, const double in[64], double out[64], bool inverse) {
  double tmp[64];
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double s = 0.0;
      for (int k = 0; k < 8; ++k) {
        s += (inverse ? basis.a[k][i] : basis.a[i][k]) * in[k * 8 + j];
      }
      tmp[i * 8 + j] = s;
    }
  }
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double s = 0.0;
      for (int k = 0; k < 8; ++k) {
        s += tmp[i * 8 + k] * (inverse ? basis.a[k][j] : basis.a[j][k]);
      }
      out[i * 8 + j] = s;
    }
  }
}

}  // namespace

std::string DegradationSpec::type_name() const {
  struct Visitor {
    std::string operator()(const JpegParams&) const { return "jpeg"; }
    std::string operator()(const ZeroMeanGaussianParams&) const { return "zero_mean_gaussian"; }
    std::string operator()(const AdditiveGaussianParams&) const { return "additive_gaussian"; }
    std::string operator()(const PoissonParams&) const { return "poisson"; }
    std::string operator()(const SaltPepperParams&) const { return "salt_pepper"; }
    std::string operator()(const StripeParams&) const { return "stripe"; }
    std::string operator()(const DeadlineParams&) const { return "deadline"; }
    std::string operator()(const MeanBlurParams&) const { return "mean_blur"; }
    std::string operator()(const FogParams&) const { return "fog"; }
  };
  return std::visit(Visitor{}, params);
}

void DegradationSpec::validate(int image_width) const {
  struct Visitor {
    int width;
    void operator()(const JpegParams& p) const {
      if (!(p.quality >= 1.0)) throw ConfigError("jpeg: quality must be >= 1");
    }
    void operator()(const ZeroMeanGaussianParams& p) const {
      if (!(p.sigma > 0.0)) throw ConfigError("zero_mean_gaussian: sigma must be positive");
    }
    void operator()(const AdditiveGaussianParams& p) const {
      if (!(p.sigma_max > 0.0)) throw ConfigError("additive_gaussian: sigma_max must be positive");
    }
    void operator()(const PoissonParams& p) const {
      if (!std::isfinite(p.snr_db)) throw ConfigError("poisson: snr_db must be finite");
      if (!(p.eps_div > 0.0)) throw ConfigError("poisson: eps_div must be positive");
    }
    void operator()(const SaltPepperParams& p) const {
      if (!(p.density >= 0.0 && p.density <= 1.0)) {
        throw ConfigError("salt_pepper: density must lie in [0,1]");
      }
    }
    void operator()(const StripeParams& p) const {
      if (p.count_min < 0 || p.count_min >= p.count_max) {
        throw ConfigError("stripe: requires 0 <= a < b");
      }
      if (p.count_max > width) throw ConfigError("stripe: b exceeds image width");
    }
    void operator()(const DeadlineParams& p) const {
      if (p.count_min < 0 || p.count_min >= p.count_max) {
        throw ConfigError("deadline: requires 0 <= a < b");
      }
      if (p.count_max > width - 3) throw ConfigError("deadline: b exceeds width - 3");
    }
    void operator()(const MeanBlurParams& p) const {
      if (p.kernel < 3 || p.kernel % 2 == 0) throw ConfigError("mean_blur: k must be odd >= 3");
    }
    void operator()(const FogParams& p) const {
      if (!(p.omega > 0.0 && p.omega < 1.0)) throw ConfigError("fog: omega must lie in (0,1)");
    }
  };
  std::visit(Visitor{image_width}, params);
}

DegradeResult apply_jpeg(const HsiCube& cube, double quality) {
  require_normalized(cube);
  DegradationSpec spec{JpegParams{quality}, 0};
  spec.validate(cube.width);
  DegradeResult result = make_result(cube, spec.params, 0);
  result.record.quant_table = scaled_quant_table(quality);

  const int h = cube.height;
  const int w = cube.width;
  const int h8 = (h + 7) / 8 * 8;
  const int w8 = (w + 7) / 8 * 8;
  static const DctBasis basis;
  const auto& table = result.record.quant_table;

  parallel_for(cube.bands, [&](std::int64_t b) {
    const float* src = cube.band_ptr(static_cast<int>(b));
    float* dst = result.cube.band_ptr(static_cast<int>(b));
    // 8-bit quantization, edge-replicated to multiples of 8.
    std::vector<double> plane(static_cast<std::size_t>(h8) * w8);
    for (int r = 0; r < h8; ++r) {
      const int sr = std::min(r, h - 1);
      for (int c = 0; c < w8; ++c) {
        const int sc = std::min(c, w - 1);
        const double v = std::round(std::clamp<double>(src[sr * w + sc], 0.0, 1.0) * 255.0);
        plane[static_cast<std::size_t>(r) * w8 + c] = v - 128.0;
      }
    }
    double block[64];
    double coeff[64];
    for (int br = 0; br < h8; br += 8) {
      for (int bc = 0; bc < w8; bc += 8) {
        for (int i = 0; i < 8; ++i) {
          for (int j = 0; j < 8; ++j) {
            block[i * 8 + j] = plane[static_cast<std::size_t>(br + i) * w8 + bc + j];
          }
        }
        dct_block(basis, block, coeff, false);
        for (int i = 0; i < 64; ++i) {
          coeff[i] = std::round(coeff[i] / table[i]) * table[i];
        }
        dct_block(basis, coeff, block, true);
        for (int i = 0; i < 8; ++i) {
          for (int j = 0; j < 8; ++j) {
            plane[static_cast<std::size_t>(br + i) * w8 + bc + j] = block[i * 8 + j];
          }
        }
      }
    }
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double v =
            std::clamp(std::round(plane[static_cast<std::size_t>(r) * w8 + c] + 128.0), 0.0, 255.0);
        dst[r * w + c] = static_cast<float>(v / 255.0);
      }
    }
  });
  return result;
}

DegradeResult apply_zero_mean_gaussian(const HsiCube& cube, double sigma, std::uint64_t seed) {
  require_normalized(cube);
  DegradationSpec spec{ZeroMeanGaussianParams{sigma}, seed};
  spec.validate(cube.width);
  DegradeResult result = make_result(cube, spec.params, seed);
  const std::size_t plane = cube.pixel_count();
  parallel_for(cube.bands, [&](std::int64_t b) {
    RngStream rng(seed, kTagZeroMeanGaussian, static_cast<std::uint32_t>(b));
    const float* src = cube.band_ptr(static_cast<int>(b));
    float* dst = result.cube.band_ptr(static_cast<int>(b));
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = clip01(static_cast<double>(src[i]) + sigma * rng.next_gaussian());
    }
  });
  return result;
}

DegradeResult apply_additive_gaussian(const HsiCube& cube, double sigma_max, std::uint64_t seed) {
  require_normalized(cube);
  DegradationSpec spec{AdditiveGaussianParams{sigma_max}, seed};
  spec.validate(cube.width);
  DegradeResult result = make_result(cube, spec.params, seed);
  result.record.sigma_c.resize(cube.bands);
  const std::size_t plane = cube.pixel_count();
  parallel_for(cube.bands, [&](std::int64_t b) {
    RngStream rng(seed, kTagAdditiveGaussian, static_cast<std::uint32_t>(b));
    const double sigma_band = rng.next_uniform(0.0, sigma_max);
    result.record.sigma_c[b] = sigma_band;
    const float* src = cube.band_ptr(static_cast<int>(b));
    float* dst = result.cube.band_ptr(static_cast<int>(b));
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = clip01(static_cast<double>(src[i]) + sigma_band * rng.next_gaussian());
    }
  });
  return result;
}

DegradeResult apply_poisson(const HsiCube& cube, double snr_db, double eps_div,
                            std::uint64_t seed) {
  require_normalized(cube);
  DegradationSpec spec{PoissonParams{snr_db, eps_div}, seed};
  spec.validate(cube.width);
  DegradeResult result = make_result(cube, spec.params, seed);
  result.record.gamma_c.assign(cube.bands, 0.0);
  const std::size_t plane = cube.pixel_count();
  const double snr_lin = std::pow(10.0, snr_db / 10.0);
  std::vector<std::uint8_t> skipped(cube.bands, 0);

  parallel_for(cube.bands, [&](std::int64_t b) {
    const float* src = cube.band_ptr(static_cast<int>(b));
    float* dst = result.cube.band_ptr(static_cast<int>(b));
    double mean_ratio = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double x = src[i];
      mean_ratio += x * x / (x + eps_div);
    }
    mean_ratio /= static_cast<double>(plane);
    if (mean_ratio <= 0.0) {
      skipped[b] = 1;  // all-zero band: scale undefined, pass through
      return;
    }
    const double gamma_band = snr_lin / mean_ratio;
    result.record.gamma_c[b] = gamma_band;
    RngStream rng(seed, kTagPoisson, static_cast<std::uint32_t>(b));
    for (std::size_t i = 0; i < plane; ++i) {
      const auto counts = rng.next_poisson(gamma_band * static_cast<double>(src[i]));
      dst[i] = clip01(static_cast<double>(counts) / gamma_band);
    }
  });

  for (int b = 0; b < cube.bands; ++b) {
    if (skipped[b]) {
      result.record.skipped_bands.push_back(b);
      result.record.warnings.push_back("band " + std::to_string(b) +
                                       " is all zero; poisson scale undefined, band unchanged");
    }
  }
  return result;
}

DegradeResult apply_salt_pepper(const HsiCube& cube, double density, std::uint64_t seed) {
  require_normalized(cube);
  DegradationSpec spec{SaltPepperParams{density}, seed};
  spec.validate(cube.width);
  DegradeResult result = make_result(cube, spec.params, seed);
  const std::size_t plane = cube.pixel_count();
  const double half = density / 2.0;
  parallel_for(cube.bands, [&](std::int64_t b) {
    RngStream rng(seed, kTagSaltPepper, static_cast<std::uint32_t>(b));
    const float* src = cube.band_ptr(static_cast<int>(b));
    float* dst = result.cube.band_ptr(static_cast<int>(b));
    for (std::size_t i = 0; i < plane; ++i) {
      const double u = rng.next_double();
      if (u < half) {
        dst[i] = 0.0f;
      } else if (u < density) {
        dst[i] = 1.0f;
      } else {
        dst[i] = src[i];
      }
    }
  });
  return result;
}

DegradeResult apply_stripes(const HsiCube& cube, int count_min, int count_max,
                            std::uint64_t seed) {
  require_normalized(cube);
  DegradationSpec spec{StripeParams{count_min, count_max}, seed};
  spec.validate(cube.width);
  DegradeResult result = make_result(cube, spec.params, seed);
  result.record.stripe_columns.resize(cube.bands);
  result.record.lambda_c.resize(cube.bands);
  parallel_for(cube.bands, [&](std::int64_t b) {
    RngStream rng(seed, kTagStripes, static_cast<std::uint32_t>(b));
    const std::int64_t n = rng.next_int_range(count_min, count_max);
    const auto cols = rng.sample_without_replacement(cube.width, n);
    const double lambda = rng.next_uniform(0.6, 0.8);
    result.record.lambda_c[b] = lambda;
    auto& recorded = result.record.stripe_columns[b];
    recorded.reserve(cols.size());
    float* dst = result.cube.band_ptr(static_cast<int>(b));
    for (std::int64_t col : cols) {
      recorded.push_back(static_cast<int>(col));
      for (int r = 0; r < cube.height; ++r) {
        dst[static_cast<std::size_t>(r) * cube.width + col] = static_cast<float>(lambda);
      }
    }
  });
  return result;
}

DegradeResult apply_deadlines(const HsiCube& cube, int count_min, int count_max,
                              std::uint64_t seed) {
  require_normalized(cube);
  DegradationSpec spec{DeadlineParams{count_min, count_max}, seed};
  spec.validate(cube.width);
  DegradeResult result = make_result(cube, spec.params, seed);
  result.record.deadline_starts.resize(cube.bands);
  result.record.deadline_widths.resize(cube.bands);
  parallel_for(cube.bands, [&](std::int64_t b) {
    RngStream rng(seed, kTagDeadlines, static_cast<std::uint32_t>(b));
    const std::int64_t n = rng.next_int_range(count_min, count_max);
    // Starts restricted so a width-3 stripe stays inside the image.
    const auto starts = rng.sample_without_replacement(cube.width - 3, n);
    auto& rec_starts = result.record.deadline_starts[b];
    auto& rec_widths = result.record.deadline_widths[b];
    float* dst = result.cube.band_ptr(static_cast<int>(b));
    for (std::int64_t start : starts) {
      const int width_j = 1 + static_cast<int>(rng.next_below(3));
      rec_starts.push_back(static_cast<int>(start));
      rec_widths.push_back(width_j);
      for (int c = static_cast<int>(start); c < static_cast<int>(start) + width_j; ++c) {
        for (int r = 0; r < cube.height; ++r) {
          dst[static_cast<std::size_t>(r) * cube.width + c] = 0.0f;
        }
      }
    }
  });
  return result;
}

DegradeResult apply_mean_blur(const HsiCube& cube, int kernel) {
  require_normalized(cube);
  DegradationSpec spec{MeanBlurParams{kernel}, 0};
  spec.validate(cube.width);
  if (kernel > 2 * std::min(cube.height, cube.width) - 1) {
    throw ConfigError("mean_blur: kernel too large for reflect padding");
  }
  DegradeResult result = make_result(cube, spec.params, 0);
  parallel_for(cube.bands, [&](std::int64_t b) {
    mean_filter_reflect(cube.band_ptr(static_cast<int>(b)),
                        result.cube.band_ptr(static_cast<int>(b)), cube.height, cube.width,
                        kernel);
  });
  return result;
}

DegradeResult apply_fog(const HsiCube& cube, double omega, std::uint64_t seed) {
  require_normalized(cube);
  if (!cube.wavelengths_nm) {
    throw ConfigError("fog requires per-band wavelengths (spectral calibration)");
  }
  DegradationSpec spec{FogParams{omega}, seed};
  spec.validate(cube.width);
  DegradeResult result = make_result(cube, spec.params, seed);

  const int h = cube.height;
  const int w = cube.width;
  const std::size_t plane = cube.pixel_count();

  // Synthetic fog density: smoothed uniform noise, min-max normalized.
  int smooth = (std::min(h, w) + 7) / 8;
  if (smooth % 2 == 0) ++smooth;
  result.record.fog_field_size = smooth;
  result.record.fog_gamma = 1.0;

  std::vector<double> rho(plane);
  {
    RngStream rng(seed, kTagFog, kFieldLane);
    for (auto& v : rho) v = rng.next_double();
    if (smooth > 1) {
      std::vector<double> smoothed(plane);
      mean_filter_reflect(rho.data(), smoothed.data(), h, w, smooth);
      rho.swap(smoothed);
    }
    const auto [lo_it, hi_it] = std::minmax_element(rho.begin(), rho.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi > lo) {
      for (auto& v : rho) v = (v - lo) / (hi - lo);
    } else {
      std::fill(rho.begin(), rho.end(), 0.0);
      result.record.warnings.push_back("fog density field degenerate; using zero density");
    }
  }

  const double lambda0 =
      *std::min_element(cube.wavelengths_nm->begin(), cube.wavelengths_nm->end());
  result.record.atmospheric_light.resize(cube.bands);

  parallel_for(cube.bands, [&](std::int64_t b) {
    const float* src = cube.band_ptr(static_cast<int>(b));
    float* dst = result.cube.band_ptr(static_cast<int>(b));
    double ambient = src[0];
    for (std::size_t i = 1; i < plane; ++i) ambient = std::max(ambient, static_cast<double>(src[i]));
    result.record.atmospheric_light[b] = ambient;
    const double exponent = lambda0 / (*cube.wavelengths_nm)[b];  // gamma = 1
    for (std::size_t i = 0; i < plane; ++i) {
      const double t1 = 1.0 - omega * rho[i];
      const double t = std::pow(t1, exponent);
      dst[i] = static_cast<float>(static_cast<double>(src[i]) * t + ambient * (1.0 - t));
    }
  });
  return result;
}

DegradeResult apply_degradation(const HsiCube& cube, const DegradationSpec& spec) {
  struct Visitor {
    const HsiCube& cube;
    std::uint64_t seed;
    DegradeResult operator()(const JpegParams& p) const { return apply_jpeg(cube, p.quality); }
    DegradeResult operator()(const ZeroMeanGaussianParams& p) const {
      return apply_zero_mean_gaussian(cube, p.sigma, seed);
    }
    DegradeResult operator()(const AdditiveGaussianParams& p) const {
      return apply_additive_gaussian(cube, p.sigma_max, seed);
    }
    DegradeResult operator()(const PoissonParams& p) const {
      return apply_poisson(cube, p.snr_db, p.eps_div, seed);
    }
    DegradeResult operator()(const SaltPepperParams& p) const {
      return apply_salt_pepper(cube, p.density, seed);
    }
    DegradeResult operator()(const StripeParams& p) const {
      return apply_stripes(cube, p.count_min, p.count_max, seed);
    }
    DegradeResult operator()(const DeadlineParams& p) const {
      return apply_deadlines(cube, p.count_min, p.count_max, seed);
    }
    DegradeResult operator()(const MeanBlurParams& p) const {
      return apply_mean_blur(cube, p.kernel);
    }
    DegradeResult operator()(const FogParams& p) const { return apply_fog(cube, p.omega, seed); }
  };
  DegradeResult result = std::visit(Visitor{cube, spec.seed}, spec.params);
  // jpeg and mean_blur draw nothing and record seed 0 on their own; stamp
  // the requested spec so metadata round-trips the seed regardless.
  result.record.spec = spec;
  return result;
}

json params_to_json(const DegradeParams& params) {
  struct Visitor {
    json operator()(const JpegParams& p) const { return {{"q", p.quality}}; }
    json operator()(const ZeroMeanGaussianParams& p) const { return {{"sigma", p.sigma}}; }
    json operator()(const AdditiveGaussianParams& p) const { return {{"sigma_max", p.sigma_max}}; }
    json operator()(const PoissonParams& p) const {
      return {{"snr_db", p.snr_db}, {"eps_div", p.eps_div}};
    }
    json operator()(const SaltPepperParams& p) const { return {{"p", p.density}}; }
    json operator()(const StripeParams& p) const {
      return {{"a", p.count_min}, {"b", p.count_max}};
    }
    json operator()(const DeadlineParams& p) const {
      return {{"a", p.count_min}, {"b", p.count_max}};
    }
    json operator()(const MeanBlurParams& p) const { return {{"k", p.kernel}}; }
    json operator()(const FogParams& p) const { return {{"omega", p.omega}}; }
  };
  return std::visit(Visitor{}, params);
}

nlohmann::json degradation_metadata(const DegradationRecord& record) {
  json sampled = json::object();
  const std::string type = record.spec.type_name();
  if (type == "jpeg") {
    sampled["quant_table"] = record.quant_table;
  } else if (type == "additive_gaussian") {
    sampled["sigma_c"] = record.sigma_c;
  } else if (type == "poisson") {
    sampled["gamma_c"] = record.gamma_c;
    sampled["skipped_bands"] = record.skipped_bands;
  } else if (type == "stripe") {
    sampled["columns"] = record.stripe_columns;
    sampled["lambda_c"] = record.lambda_c;
  } else if (type == "deadline") {
    sampled["starts"] = record.deadline_starts;
    sampled["widths"] = record.deadline_widths;
  } else if (type == "fog") {
    sampled["atmospheric_light"] = record.atmospheric_light;
    sampled["gamma"] = record.fog_gamma;
    sampled["field_smooth_size"] = record.fog_field_size;
  }
  json meta;
  meta["type"] = type;
  meta["params"] = params_to_json(record.spec.params);
  meta["seed"] = record.spec.seed;
  meta["source_digest"] = record.source_digest;
  meta["sampled"] = sampled;
  if (!record.warnings.empty()) meta["warnings"] = record.warnings;
  return meta;
}

DegradationSpec spec_from_metadata(const nlohmann::json& metadata) {
  DegradationSpec spec;
  try {
    const std::string type = metadata.at("type").get<std::string>();
    const json& p = metadata.at("params");
    if (type == "jpeg") {
      spec.params = JpegParams{p.at("q").get<double>()};
    } else if (type == "zero_mean_gaussian") {
      spec.params = ZeroMeanGaussianParams{p.at("sigma").get<double>()};
    } else if (type == "additive_gaussian") {
      spec.params = AdditiveGaussianParams{p.at("sigma_max").get<double>()};
    } else if (type == "poisson") {
      spec.params = PoissonParams{p.at("snr_db").get<double>(),
                                  p.value("eps_div", 1e-6)};
    } else if (type == "salt_pepper") {
      spec.params = SaltPepperParams{p.at("p").get<double>()};
    } else if (type == "stripe") {
      spec.params = StripeParams{p.at("a").get<int>(), p.at("b").get<int>()};
    } else if (type == "deadline") {
      spec.params = DeadlineParams{p.at("a").get<int>(), p.at("b").get<int>()};
    } else if (type == "mean_blur") {
      spec.params = MeanBlurParams{p.at("k").get<int>()};
    } else if (type == "fog") {
      spec.params = FogParams{p.at("omega").get<double>()};
    } else {
      throw ConfigError("unknown degradation type \"" + type + "\"");
    }
    spec.seed = metadata.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw DataError("invalid degradation metadata: " + std::string(e.what()));
  }
  return spec;
}

DegradeResult degrade_and_record(const HsiCube& cube, const DegradationSpec& spec,
                                 const std::filesystem::path& metadata_path) {
  DegradeResult result = apply_degradation(cube, spec);
  std::ofstream out(metadata_path, std::ios::trunc);
  if (!out) throw DataError("cannot write metadata " + metadata_path.string());
  out << degradation_metadata(result.record).dump(2) << "\n";
  return result;
}

std::vector<DegradationSpec> default_degradations(std::uint64_t seed, int stripe_min,
                                                  int stripe_max) {
  std::vector<DegradationSpec> specs;
  specs.push_back({JpegParams{110.0}, seed});
  specs.push_back({ZeroMeanGaussianParams{0.25}, seed});
  specs.push_back({AdditiveGaussianParams{0.2}, seed});
  specs.push_back({PoissonParams{-10.0, 1e-6}, seed});
  specs.push_back({SaltPepperParams{0.1}, seed});
  specs.push_back({StripeParams{stripe_min, stripe_max}, seed});
  specs.push_back({DeadlineParams{stripe_min, stripe_max}, seed});
  specs.push_back({MeanBlurParams{3}, seed});
  specs.push_back({FogParams{0.3}, seed});
  return specs;
}

}  // namespace hypertta
