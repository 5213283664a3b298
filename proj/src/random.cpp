#include "protood/random.hpp"

#include <cmath>
#include <numbers>

namespace protood {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t CounterStream::at(std::uint64_t counter) const {
  return mix64(key_ + (counter + 1) * kGolden);
}

double CounterStream::next_uniform() {
  // 53 random bits, shifted into (0, 1].
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double CounterStream::next_normal() {
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterStream::next_below(std::uint64_t bound) {
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % bound;
}

Vec CounterStream::normal_vector(std::size_t n, double stddev) {
  Vec v(n);
  for (double& x : v) x = stddev * next_normal();
  return v;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : component) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return mix64(seed ^ mix64(h));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed + mix64(index + kGolden));
}

}  // namespace protood
