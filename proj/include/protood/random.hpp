#pragma once

#include <cstdint>
#include <string_view>

#include "protood/linalg.hpp"

namespace protood {

// Counter-based stream: draw n is a pure function of (key, n), so any value can
// be regenerated without replaying the stream. Mixing is the SplitMix64 finalizer.
class CounterStream {
 public:
  explicit CounterStream(std::uint64_t key) : key_(key) {}

  std::uint64_t at(std::uint64_t counter) const;

  std::uint64_t next_u64() { return at(counter_++); }
  // Uniform in (0, 1].
  double next_uniform();
  // Standard normal, Box-Muller on two consecutive draws.
  double next_normal();
  // Uniform integer in [0, bound).
  std::uint64_t next_below(std::uint64_t bound);

  Vec normal_vector(std::size_t n, double stddev = 1.0);

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Subseed for a named component: FNV-1a over the name, mixed with the parent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace protood
