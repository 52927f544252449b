#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hypertta/hsi.hpp"

namespace hypertta {

// Nine corruption operators over normalized cubes. Every random draw comes
// from a stream keyed on (seed, operator tag, band), so bands are
// independent, may be processed on any thread schedule, and replaying a
// spec regenerates the exact same sampled values.

struct JpegParams {
  double quality = 1.0;  // q; q >= 100 makes the scaled table all ones
};
struct ZeroMeanGaussianParams {
  double sigma = 0.0;
};
struct AdditiveGaussianParams {
  double sigma_max = 0.0;  // per-band sigma_c ~ U[0, sigma_max)
};
struct PoissonParams {
  double snr_db = 0.0;
  double eps_div = 1e-6;  // guards the division in the scale factor
};
struct SaltPepperParams {
  double density = 0.0;  // p; p/2 salt, p/2 pepper
};
struct StripeParams {
  int count_min = 0;  // a; per-band stripe count ~ U_int[a, b)
  int count_max = 0;  // b
};
struct DeadlineParams {
  int count_min = 0;
  int count_max = 0;
};
struct MeanBlurParams {
  int kernel = 3;  // k, odd >= 3
};
struct FogParams {
  double omega = 0.0;  // atmospheric scattering coefficient, 0 < omega < 1
};

using DegradeParams =
    std::variant<JpegParams, ZeroMeanGaussianParams, AdditiveGaussianParams, PoissonParams,
                 SaltPepperParams, StripeParams, DeadlineParams, MeanBlurParams, FogParams>;

struct DegradationSpec {
  DegradeParams params;
  std::uint64_t seed = 0;

  // Stable identifier, also the RNG stream tag and the metadata "type".
  std::string type_name() const;
  void validate(int image_width) const;
};

struct DegradationRecord {
  DegradationSpec spec;
  std::string source_digest;

  // Sampled values actually drawn, filled per operator.
  std::vector<double> sigma_c;                    // additive gaussian
  std::vector<double> gamma_c;                    // poisson scale per band
  std::vector<int> skipped_bands;                 // poisson all-zero bands
  std::vector<std::vector<int>> stripe_columns;   // per band
  std::vector<double> lambda_c;                   // stripe intensity per band
  std::vector<std::vector<int>> deadline_starts;  // per band
  std::vector<std::vector<int>> deadline_widths;  // per band
  std::vector<int> quant_table;                   // jpeg, 64 scaled entries
  std::vector<double> atmospheric_light;          // fog A_c per band
  double fog_gamma = 0.0;                         // fixed decay stand-in
  int fog_field_size = 0;                         // smoothing window of the density field
  std::vector<std::string> warnings;
};

struct DegradeResult {
  HsiCube cube;
  DegradationRecord record;
};

DegradeResult apply_jpeg(const HsiCube& cube, double quality);
DegradeResult apply_zero_mean_gaussian(const HsiCube& cube, double sigma, std::uint64_t seed);
DegradeResult apply_additive_gaussian(const HsiCube& cube, double sigma_max, std::uint64_t seed);
DegradeResult apply_poisson(const HsiCube& cube, double snr_db, double eps_div,
                            std::uint64_t seed);
DegradeResult apply_salt_pepper(const HsiCube& cube, double density, std::uint64_t seed);
DegradeResult apply_stripes(const HsiCube& cube, int count_min, int count_max,
                            std::uint64_t seed);
DegradeResult apply_deadlines(const HsiCube& cube, int count_min, int count_max,
                              std::uint64_t seed);
DegradeResult apply_mean_blur(const HsiCube& cube, int kernel);
DegradeResult apply_fog(const HsiCube& cube, double omega, std::uint64_t seed);

// Dispatch on the spec's operator.
DegradeResult apply_degradation(const HsiCube& cube, const DegradationSpec& spec);

// Same, plus metadata JSON written next to the output for replay.
DegradeResult degrade_and_record(const HsiCube& cube, const DegradationSpec& spec,
                                 const std::filesystem::path& metadata_path);

nlohmann::json degradation_metadata(const DegradationRecord& record);
DegradationSpec spec_from_metadata(const nlohmann::json& metadata);
nlohmann::json params_to_json(const DegradeParams& params);

// The nine default specs of the synthetic benchmark, in a fixed order.
// Stripe and deadline counts are passed in so they can track image width.
std::vector<DegradationSpec> default_degradations(std::uint64_t seed, int stripe_min,
                                                  int stripe_max);

}  // namespace hypertta
