#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hypertta {

// Dense H x W x C raster in band-sequential order: all pixels of band 0
// (row-major), then band 1, and so on. Values are stored as f32 to match
// the on-disk format; arithmetic that needs it widens to f64.
struct HsiCube {
  int height = 0;
  int width = 0;
  int bands = 0;
  std::vector<float> data;  // size height*width*bands, BSQ
  std::optional<std::vector<double>> wavelengths_nm;
  // Set when every value is known to lie in [0, 1]; degradation operators
  // require it.
  bool normalized = false;

  static HsiCube zeros(int height, int width, int bands);

  std::size_t index(int band, int row, int col) const {
    return (static_cast<std::size_t>(band) * height + row) * width + col;
  }
  float at(int band, int row, int col) const { return data[index(band, row, col)]; }
  float& at(int band, int row, int col) { return data[index(band, row, col)]; }
  const float* band_ptr(int band) const {
    return data.data() + static_cast<std::size_t>(band) * height * width;
  }
  float* band_ptr(int band) {
    return data.data() + static_cast<std::size_t>(band) * height * width;
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  void validate() const;
  // "sha256:..." over the raw f32 payload (the .hsi file body).
  std::string digest() const;
};

// Per-pixel class ids, row-major; 0 means unlabeled, valid ids are 1..K
// where K = class_names.size().
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> labels;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::uint16_t at(int row, int col) const {
    return labels[static_cast<std::size_t>(row) * width + col];
  }
  std::uint16_t& at(int row, int col) {
    return labels[static_cast<std::size_t>(row) * width + col];
  }
  void validate() const;
};

struct BandRange {
  double min = 0.0;
  double max = 0.0;
};

struct NormalizeResult {
  HsiCube cube;
  std::vector<BandRange> ranges;   // per-band (min, max) for inverse mapping
  std::vector<int> constant_bands; // bands mapped to zero, one warning each
  std::vector<std::string> warnings;
};

// Independent per-band min-max rescale to [0, 1]. A constant band maps to
// all zeros and records a warning instead of failing, since fully dead
// bands occur after deadline corruption.
NormalizeResult normalize_bands(const HsiCube& cube);

// w x w x C block around a center pixel, stored band-major like the cube.
struct Patch {
  int center_row = 0;
  int center_col = 0;
  int size = 0;   // w, odd
  int bands = 0;
  std::vector<double> values;  // [bands][w][w]

  double at(int band, int r, int c) const {
    return values[(static_cast<std::size_t>(band) * size + r) * size + c];
  }
};

// Border centers use reflect padding: the mirror does not repeat the edge
// pixel, so a row {a,b,c} extends to {b,a,b,c,b}. Requires w odd and
// w <= 2*min(H,W)-1 so a single reflection suffices.
Patch extract_patch(const HsiCube& cube, int center_row, int center_col, int w);

enum class SplitTag : std::uint8_t { None = 0, Train = 1, Target = 2 };

struct SplitSpec {
  double train_fraction = 0.0;
  std::uint64_t seed = 0;
  int height = 0;
  int width = 0;
  std::vector<SplitTag> assignment;  // row-major, None for unlabeled pixels

  SplitTag at(int row, int col) const {
    return assignment[static_cast<std::size_t>(row) * width + col];
  }
  // Row-major pixel indices with the given tag.
  std::vector<std::int64_t> pixels(SplitTag tag) const;
};

// Per class: shuffle that class's pixels with a stream derived from
// (seed, class id), then take round-half-up(fraction * n) of them as train,
// never fewer than one. Identical inputs give identical assignments.
SplitSpec stratified_split(const LabelMap& labels, double train_fraction, std::uint64_t seed);

}  // namespace hypertta
