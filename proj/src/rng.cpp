#include "hypertta/rng.hpp"

#include <cmath>
#include <numbers>

#include "hypertta/common.hpp"

namespace hypertta {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

RngStream::RngStream(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

RngStream::RngStream(std::uint64_t seed, std::uint32_t tag, std::uint32_t lane) {
  // Fold tag and lane through the mixer so neighboring lanes decorrelate.
  std::uint64_t sm = seed;
  std::uint64_t h = splitmix64(sm);
  sm = h ^ (0x632BE59BD9B4E019ULL * (static_cast<std::uint64_t>(tag) + 1));
  h = splitmix64(sm);
  sm = h ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(lane) + 1));
  for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t RngStream::next_u64() {
  // xoshiro256**
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::next_double_open0() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n == 0) throw ConfigError("next_below: empty range");
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n)) >> 64);
}

std::int64_t RngStream::next_int_range(std::int64_t a, std::int64_t b) {
  if (a >= b) throw ConfigError("next_int_range: requires a < b");
  return a + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(b - a)));
}

double RngStream::next_gaussian() {
  const double u1 = next_double_open0();
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t RngStream::next_poisson(double lambda) {
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw NumericError("poisson: lambda must be finite and nonnegative");
  }
  if (lambda == 0.0) return 0;
  if (lambda < 30.0) {
    const double u = next_double();
    double p = std::exp(-lambda);
    double cum = p;
    std::int64_t k = 0;
    while (u > cum) {
      ++k;
      p *= lambda / static_cast<double>(k);
      cum += p;
      if (k > 1000000) break;  // u ~ 1 and accumulated roundoff; pmf mass is exhausted
    }
    return k;
  }
  const double x = std::round(lambda + std::sqrt(lambda) * next_gaussian());
  return x < 0.0 ? 0 : static_cast<std::int64_t>(x);
}

std::vector<std::int64_t> RngStream::sample_without_replacement(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) throw ConfigError("sample_without_replacement: k out of range");
  std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) {
    const std::int64_t j = i + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    out.push_back(pool[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace hypertta
