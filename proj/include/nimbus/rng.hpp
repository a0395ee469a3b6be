#pragma once

#include <cstdint>

namespace nimbus {

// SplitMix64 (Steele, Lea, Flood 2014). Chosen over std::mt19937 because the
// standard distributions are implementation-defined; this generator plus the
// helpers below produce identical sequences on every platform. Splittable:
// child streams are seeded from the parent state, so independent substreams
// can be derived deterministically.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Derive an independent child stream keyed by `index`.
  SplitMix64 split(std::uint64_t index) {
    SplitMix64 key(state_ ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
    return SplitMix64(key.next());
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Multiply-shift reduction; bias is below
  // 2^-64 per draw, negligible for the n used here.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

private:
  std::uint64_t state_;
};

}  // namespace nimbus
