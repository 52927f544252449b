#include "hypertta/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "hypertta/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "raster I/O assumes a little-endian host");

namespace hypertta {

namespace {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sidecar " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed sidecar " + path.string() + ": " + e.what());
  }
  return j;
}

void write_bytes(const std::filesystem::path& path, const void* data, std::size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out) throw DataError("short write to " + path.string());
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open " + path.string());
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(size));
  in.read(buf.data(), size);
  if (!in) throw DataError("truncated read from " + path.string());
  return buf;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& data_path) {
  std::filesystem::path p = data_path;
  p.replace_extension(".json");
  return p;
}

void write_cube(const HsiCube& cube, const std::filesystem::path& hsi_path) {
  cube.validate();
  json header;
  header["height"] = cube.height;
  header["width"] = cube.width;
  header["bands"] = cube.bands;
  header["dtype"] = "f32le";
  header["interleave"] = "bsq";
  if (cube.wavelengths_nm) header["wavelengths_nm"] = *cube.wavelengths_nm;

  std::ofstream side(sidecar_path(hsi_path), std::ios::trunc);
  if (!side) throw DataError("cannot write sidecar for " + hsi_path.string());
  side << header.dump(2) << "\n";
  write_bytes(hsi_path, cube.data.data(), cube.data.size() * sizeof(float));
}

HsiCube read_cube(const std::filesystem::path& hsi_path) {
  const json header = read_json_file(sidecar_path(hsi_path));
  HsiCube cube;
  try {
    cube.height = header.at("height").get<int>();
    cube.width = header.at("width").get<int>();
    cube.bands = header.at("bands").get<int>();
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != "f32le") throw DataError("unknown dtype \"" + dtype + "\"");
    const std::string interleave = header.at("interleave").get<std::string>();
    if (interleave != "bsq") {
      throw DataError("unsupported interleave \"" + interleave + "\" (only bsq)");
    }
    if (header.contains("wavelengths_nm")) {
      cube.wavelengths_nm = header.at("wavelengths_nm").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw DataError("invalid cube header: " + std::string(e.what()));
  }
  if (cube.height < 1 || cube.width < 1 || cube.bands < 1) {
    throw DataError("invalid cube header: nonpositive dimensions");
  }

  const auto bytes = read_bytes(hsi_path);
  const std::size_t expected =
      static_cast<std::size_t>(cube.height) * cube.width * cube.bands * sizeof(float);
  if (bytes.size() != expected) {
    throw DataError("cube payload length mismatch: header expects " +
                    std::to_string(expected) + " bytes, file has " +
                    std::to_string(bytes.size()));
  }
  cube.data.resize(bytes.size() / sizeof(float));
  std::memcpy(cube.data.data(), bytes.data(), bytes.size());
  cube.validate();

  cube.normalized = true;
  for (float v : cube.data) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      cube.normalized = false;
      break;
    }
  }
  return cube;
}

void write_labels(const LabelMap& labels, const std::filesystem::path& lbl_path) {
  labels.validate();
  json header;
  header["height"] = labels.height;
  header["width"] = labels.width;
  header["classes"] = labels.class_names;
  std::ofstream side(sidecar_path(lbl_path), std::ios::trunc);
  if (!side) throw DataError("cannot write sidecar for " + lbl_path.string());
  side << header.dump(2) << "\n";
  write_bytes(lbl_path, labels.labels.data(), labels.labels.size() * sizeof(std::uint16_t));
}

LabelMap read_labels(const std::filesystem::path& lbl_path) {
  const json header = read_json_file(sidecar_path(lbl_path));
  LabelMap labels;
  try {
    labels.height = header.at("height").get<int>();
    labels.width = header.at("width").get<int>();
    labels.class_names = header.at("classes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError("invalid label header: " + std::string(e.what()));
  }
  if (labels.height < 1 || labels.width < 1) {
    throw DataError("invalid label header: nonpositive dimensions");
  }
  const auto bytes = read_bytes(lbl_path);
  const std::size_t expected =
      static_cast<std::size_t>(labels.height) * labels.width * sizeof(std::uint16_t);
  if (bytes.size() != expected) {
    throw DataError("label payload length mismatch: header expects " +
                    std::to_string(expected) + " bytes, file has " +
                    std::to_string(bytes.size()));
  }
  labels.labels.resize(bytes.size() / sizeof(std::uint16_t));
  std::memcpy(labels.labels.data(), bytes.data(), bytes.size());
  labels.validate();
  return labels;
}

}  // namespace hypertta
