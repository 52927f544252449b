#include "hypertta/common.hpp"

#include <openssl/evp.h>

#include <array>

namespace hypertta {

std::string sha256_hex(const void* data, std::size_t len) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int md_len = 0;
  if (EVP_Digest(data, len, md.data(), &md_len, EVP_sha256(), nullptr) != 1) {
    throw NumericError("sha256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out = "sha256:";
  out.reserve(7 + 2 * md_len);
  for (unsigned int i = 0; i < md_len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace hypertta
