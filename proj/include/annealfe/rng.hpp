#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace annealfe {

// Counter-keyed random stream. The pair (seed, stream_id) fully determines
// the generated sequence, so N-way parallel runs that assign one stream per
// sample sequence are reproducible regardless of worker count.
//
// mt19937_64 output is pinned by the C++ standard. Doubles are produced from
// raw engine bits instead of std::uniform_real_distribution /
// std::normal_distribution, whose outputs are implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : engine_(mix(seed, stream_id)) {}

  // Uniform on [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on {-1, +1}.
  double next_spin() { return next_double() < 0.5 ? -1.0 : 1.0; }

  // Uniform on [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller; uses two uniforms per call.
  double next_normal() {
    double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  static std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream_id) {
    return splitmix64(splitmix64(seed) + stream_id);
  }

  // Seed derivation for nested deterministic work splits
  // (e.g. instance -> method -> trial).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0) {
    return mix(mix(seed, a), b);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace annealfe
