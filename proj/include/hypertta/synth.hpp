#pragma once

#include <cstdint>
#include <utility>

#include <json.hpp>

#include "hypertta/hsi.hpp"

namespace hypertta {

// Seeded synthetic scene: contiguous class regions from a Voronoi partition,
// per-class smooth spectral curves with distinct peak wavelengths, and
// band-correlated per-pixel perturbation. A desk-scale stand-in for a real
// labeled cube with controllable separability.
//
// Separability has three knobs beyond the per-pixel noise: `class_variation`
// gives every Voronoi cell its own smooth spectral deviation from the class
// curve (within-class variability that survives spatial averaging, the way
// real fields differ in moisture or canopy state), and `illumination` applies
// a smooth multiplicative brightness field across the scene (terrain shading).
// Both default to 0, which reproduces the plain iid-noise scene.
struct SyntheticSpec {
  int height = 96;
  int width = 96;
  int bands = 32;
  int classes = 5;
  int sites = 0;  // Voronoi sites; 0 means 3 per class
  double wavelength_lo_nm = 430.0;
  double wavelength_hi_nm = 860.0;
  double spectral_noise = 0.05;  // perturbation scale in reflectance units
  double class_variation = 0.0;  // per-cell smooth spectral offset amplitude
  double illumination = 0.0;     // brightness field amplitude, in [0,1)
  std::uint64_t seed = 1;

  int site_count() const { return sites > 0 ? sites : 3 * classes; }
  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

std::pair<HsiCube, LabelMap> gen_synthetic(const SyntheticSpec& spec);

}  // namespace hypertta
