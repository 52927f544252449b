#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace hypertta {

// Error taxonomy mirrored by the CLI exit codes: ConfigError -> 2,
// DataError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// "sha256:<hex>" over a raw byte buffer.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace hypertta
