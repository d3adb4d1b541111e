#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

// Counter-based random number generation. Every draw is a pure function of
// a 64-bit key, so values do not depend on evaluation order or parallel
// schedule. Sequential consumers wrap a key plus an incrementing counter.

namespace ctsim::rng {

// splitmix64 finalizer; full-avalanche 64-bit mixer.
inline constexpr uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline constexpr uint64_t hash2(uint64_t key, uint64_t v) {
  return mix64(key + 0x9E3779B97F4A7C15ULL * (v + 1));
}

inline constexpr uint64_t hash3(uint64_t key, uint64_t a, uint64_t b) {
  return hash2(hash2(key, a), b);
}

inline constexpr uint64_t hash4(uint64_t key, uint64_t a, uint64_t b,
                                uint64_t c) {
  return hash2(hash3(key, a, b), c);
}

// FNV-1a over a string, used to key named substreams.
inline constexpr uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (char ch : s) {
    h ^= static_cast<uint8_t>(ch);
    h *= 0x00000100000001B3ULL;
  }
  return h;
}

// Derives an independent child seed from a master seed, a stream name and an
// index. Used by the harness to fan out per-image and per-variant seeds.
inline constexpr uint64_t child_seed(uint64_t master, std::string_view stream,
                                     uint64_t index = 0) {
  return hash3(master, fnv1a(stream), index);
}

// Uniform double in (0, 1]; never returns 0 so it is safe under log().
inline double u01(uint64_t h) {
  return static_cast<double>((h >> 11) + 1) * 0x1.0p-53;
}

inline double uniform(uint64_t h, double lo, double hi) {
  return lo + (hi - lo) * u01(h);
}

// One standard normal per key (Box-Muller, cosine branch).
inline double normal(uint64_t h) {
  const double u1 = u01(mix64(h ^ 0xD1B54A32D192ED03ULL));
  const double u2 = u01(mix64(h ^ 0x8CB92BA72F3D8DD7ULL));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Keyed sequential stream for consumers that want a draw order (shuffles,
// weight init). Still replayable from the key alone.
class Stream {
 public:
  explicit Stream(uint64_t key) : key_(key) {}

  uint64_t next_u64() { return hash2(key_, ctr_++); }
  double next_u01() { return u01(next_u64()); }
  double next_uniform(double lo, double hi) { return uniform(next_u64(), lo, hi); }
  double next_normal() { return normal(next_u64()); }

  // Uniform integer in [0, n); n must be > 0.
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t key_;
  uint64_t ctr_ = 0;
};

}  // namespace ctsim::rng
