#pragma once

// Seeded pseudo-random streams for permutation testing. Stream (seed, index)
// is derived by mixing, not by advancing a shared sequence, so any stream can
// be constructed in O(1) and permutation i can run on any worker.

#include <cstdint>
#include <numeric>
#include <vector>

#include "gsatk/error.hpp"

namespace gsatk {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// splitmix64 stream keyed by (seed, index). Single consumer per instance.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t index)
      : state_(detail::mix64(seed ^ detail::mix64(index + 0x9E3779B97F4A7C15ULL))) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return detail::mix64(state_);
  }

  /// Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in (0, 1); never returns 0.
  double next_open_double() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unbiased uniform integer in [0, bound) via rejection sampling.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw ValidationError("next_below: bound must be > 0");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates permutation of 0..n-1 driven by `stream`.
inline std::vector<std::size_t> permute(RngStream& stream, std::size_t n) {
  if (n == 0) throw ValidationError("permute: n must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(stream.next_below(i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

/// k distinct indices from 0..n-1, in draw order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(RngStream& stream,
                                                           std::size_t n,
                                                           std::size_t k) {
  if (n == 0) throw ValidationError("sample_without_replacement: n must be >= 1");
  if (k > n)
    throw ValidationError("sample_without_replacement: k exceeds n");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(stream.next_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace gsatk
