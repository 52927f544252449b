#pragma once

#include <filesystem>

#include "hypertta/hsi.hpp"

namespace hypertta {

// Cube on disk: <name>.hsi, raw little-endian f32 in BSQ order, with a
// sidecar <name>.json holding {"height","width","bands","dtype":"f32le",
// "interleave":"bsq"} and optionally "wavelengths_nm". Round-trips are
// bit-exact.
void write_cube(const HsiCube& cube, const std::filesystem::path& hsi_path);
HsiCube read_cube(const std::filesystem::path& hsi_path);

// Labels on disk: <name>.lbl, raw little-endian u16 row-major (0 =
// unlabeled), sidecar <name>.json with {"height","width","classes":[...]}.
void write_labels(const LabelMap& labels, const std::filesystem::path& lbl_path);
LabelMap read_labels(const std::filesystem::path& lbl_path);

std::filesystem::path sidecar_path(const std::filesystem::path& data_path);

}  // namespace hypertta
