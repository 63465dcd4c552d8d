#pragma once

#include <cstdint>
#include <cstddef>
#include <cmath>
#include <vector>

namespace paircfr {

// Deterministic 64-bit generator used everywhere in this project.
//
// The generator is SplitMix64: a counter advanced by the golden-ratio
// increment, passed through the Stafford mix13 finalizer. Child streams are
// derived from the *construction* seed (not the current state), so a stream's
// output never depends on how many values its parent has drawn:
//
//   next():    state += 0x9E3779B97F4A7C15; return mix13(state)
//   child(id): Rng(mix13(mix13(seed ^ 0x9E3779B97F4A7C15 * (id + 1))))
//
// Gaussian draws use the Marsaglia polar method on uniforms built as
// (next() >> 11) * 2^-53; the spare value is cached per Rng instance.
// Bounded integers use the 128-bit multiply-shift reduction.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Stable sub-stream keyed by `id`; independent of draws made so far.
  Rng child(std::uint64_t id) const {
    return Rng(mix(mix(seed_ ^ (0x9E3779B97F4A7C15ULL * (id + 1)))));
  }

  std::uint64_t seed() const { return seed_; }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Multiply-shift reduction (bias < 2^-64).
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via the polar method; second value of each pair cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a over arbitrary bytes, optionally salted with a 64-bit seed that is
// absorbed first as 8 little-endian bytes. Shared by the feature hasher and
// dataset provenance hashing.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t salt = 0, bool use_salt = false) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  if (use_salt) {
    for (int i = 0; i < 8; ++i) {
      h ^= static_cast<unsigned char>(salt >> (8 * i));
      h *= 0x100000001b3ULL;
    }
  }
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace paircfr
