#include "hypertta/hsi.hpp"

#include <algorithm>
#include <cmath>

#include "hypertta/common.hpp"
#include "hypertta/parallel.hpp"
#include "hypertta/rng.hpp"

namespace hypertta {

HsiCube HsiCube::zeros(int height, int width, int bands) {
  if (height < 1 || width < 1 || bands < 1) {
    throw ConfigError("cube dimensions must be positive");
  }
  HsiCube cube;
  cube.height = height;
  cube.width = width;
  cube.bands = bands;
  cube.data.assign(static_cast<std::size_t>(height) * width * bands, 0.0f);
  return cube;
}

void HsiCube::validate() const {
  if (height < 1 || width < 1 || bands < 1) {
    throw DataError("cube dimensions must be positive");
  }
  if (data.size() != static_cast<std::size_t>(height) * width * bands) {
    throw DataError("cube data length does not match height*width*bands");
  }
  if (wavelengths_nm) {
    if (wavelengths_nm->size() != static_cast<std::size_t>(bands)) {
      throw DataError("wavelengths_nm length does not match band count");
    }
    for (double w : *wavelengths_nm) {
      if (!(w > 0.0)) throw DataError("wavelengths_nm must be strictly positive");
    }
  }
}

std::string HsiCube::digest() const {
  return sha256_hex(data.data(), data.size() * sizeof(float));
}

void LabelMap::validate() const {
  if (height < 1 || width < 1) throw DataError("label map dimensions must be positive");
  if (labels.size() != static_cast<std::size_t>(height) * width) {
    throw DataError("label data length does not match height*width");
  }
  const int k = num_classes();
  for (std::uint16_t v : labels) {
    if (v > k) throw DataError("label id exceeds class count");
  }
}

NormalizeResult normalize_bands(const HsiCube& cube) {
  cube.validate();
  NormalizeResult result;
  result.cube = cube;
  result.cube.normalized = true;
  result.ranges.resize(cube.bands);
  const std::size_t plane = cube.pixel_count();

  std::vector<std::uint8_t> constant(cube.bands, 0);
  parallel_for(cube.bands, [&](std::int64_t b) {
    const float* src = cube.band_ptr(static_cast<int>(b));
    float* dst = result.cube.band_ptr(static_cast<int>(b));
    double lo = src[0];
    double hi = src[0];
    for (std::size_t i = 1; i < plane; ++i) {
      lo = std::min(lo, static_cast<double>(src[i]));
      hi = std::max(hi, static_cast<double>(src[i]));
    }
    result.ranges[b] = {lo, hi};
    if (hi == lo) {
      constant[b] = 1;
      std::fill(dst, dst + plane, 0.0f);
      return;
    }
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = static_cast<float>((static_cast<double>(src[i]) - lo) * inv);
    }
  });

  for (int b = 0; b < cube.bands; ++b) {
    if (constant[b]) {
      result.constant_bands.push_back(b);
      result.warnings.push_back("band " + std::to_string(b) +
                                " is constant; normalized to all zeros");
    }
  }
  return result;
}

namespace {
// Mirror without repeating the edge pixel: -1 -> 1, L -> L-2.
inline int reflect_index(int x, int len) {
  if (x < 0) return -x;
  if (x >= len) return 2 * len - 2 - x;
  return x;
}
}  // namespace

Patch extract_patch(const HsiCube& cube, int center_row, int center_col, int w) {
  cube.validate();
  if (w < 1 || w % 2 == 0) throw ConfigError("patch size must be odd and positive");
  if (w > 2 * std::min(cube.height, cube.width) - 1) {
    throw ConfigError("patch size too large for single-reflection padding");
  }
  if (center_row < 0 || center_row >= cube.height || center_col < 0 ||
      center_col >= cube.width) {
    throw ConfigError("patch center out of bounds");
  }
  Patch patch;
  patch.center_row = center_row;
  patch.center_col = center_col;
  patch.size = w;
  patch.bands = cube.bands;
  patch.values.resize(static_cast<std::size_t>(cube.bands) * w * w);
  const int half = w / 2;
  std::size_t out = 0;
  for (int b = 0; b < cube.bands; ++b) {
    const float* band = cube.band_ptr(b);
    for (int dr = -half; dr <= half; ++dr) {
      const int r = reflect_index(center_row + dr, cube.height);
      const float* row = band + static_cast<std::size_t>(r) * cube.width;
      for (int dc = -half; dc <= half; ++dc) {
        const int c = reflect_index(center_col + dc, cube.width);
        patch.values[out++] = static_cast<double>(row[c]);
      }
    }
  }
  return patch;
}

std::vector<std::int64_t> SplitSpec::pixels(SplitTag tag) const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == tag) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

SplitSpec stratified_split(const LabelMap& labels, double train_fraction, std::uint64_t seed) {
  labels.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  const int k = labels.num_classes();
  if (k < 1) throw ConfigError("label map declares no classes");

  std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const std::uint16_t v = labels.labels[i];
    if (v > 0) by_class[v - 1].push_back(static_cast<std::int64_t>(i));
  }
  for (int c = 0; c < k; ++c) {
    if (by_class[c].empty()) {
      throw ConfigError("class " + std::to_string(c + 1) + " has no labeled pixels");
    }
  }

  SplitSpec spec;
  spec.train_fraction = train_fraction;
  spec.seed = seed;
  spec.height = labels.height;
  spec.width = labels.width;
  spec.assignment.assign(labels.labels.size(), SplitTag::None);

  constexpr std::uint32_t kSplitStreamTag = 0x53504C54;  // "SPLT"
  for (int c = 0; c < k; ++c) {
    auto& pix = by_class[c];
    RngStream rng(seed, kSplitStreamTag, static_cast<std::uint32_t>(c + 1));
    rng.shuffle(pix);
    const double n = static_cast<double>(pix.size());
    // round-half-up, floor at 1
    std::size_t n_train = static_cast<std::size_t>(std::floor(train_fraction * n + 0.5));
    n_train = std::max<std::size_t>(n_train, 1);
    n_train = std::min(n_train, pix.size());
    for (std::size_t i = 0; i < pix.size(); ++i) {
      spec.assignment[static_cast<std::size_t>(pix[i])] =
          i < n_train ? SplitTag::Train : SplitTag::Target;
    }
  }
  return spec;
}

}  // namespace hypertta
