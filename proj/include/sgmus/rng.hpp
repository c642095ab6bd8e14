#pragma once

// Seeded random streams. Every stochastic component draws from its own
// stream derived from (master seed, stream index, purpose tag), so results
// do not depend on scheduling or on how work is batched.
//
// The engine is std::mt19937_64 (its output sequence is fixed by the C++
// standard). Gaussian variates use an explicit Box-Muller transform because
// std::normal_distribution's algorithm is implementation-defined and would
// break bitwise reproducibility of datasets and checkpoints across builds.

#include <cmath>
#include <cstdint>
#include <random>

namespace sgmus {

// Stream purpose tags keep independently seeded parts of the pipeline from
// colliding even when they share a (master, index) pair.
namespace stream_purpose {
inline constexpr std::uint64_t kTrajectory = 1;
inline constexpr std::uint64_t kTraining = 2;
inline constexpr std::uint64_t kGeneration = 3;
inline constexpr std::uint64_t kWindow = 4;
inline constexpr std::uint64_t kExperiment = 5;
inline constexpr std::uint64_t kInit = 6;
}  // namespace stream_purpose

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Mixes (master, index, purpose) into a single engine seed. Chained
// splitmix64 rounds; collisions between distinct triples are negligible.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                 std::uint64_t purpose = 0) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  s = splitmix64(s ^ (0xc2b2ae3d27d4eb4fULL * (purpose + 1)));
  return s;
}

class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  static GaussianStream derived(std::uint64_t master, std::uint64_t index,
                                std::uint64_t purpose = 0) {
    return GaussianStream(derive_seed(master, index, purpose));
  }

  std::uint64_t raw() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n). Rejection-free modulo is fine here: n is always far
  // below 2^64 so the bias is immeasurably small, but rejection keeps the
  // draw exact and costs nothing in practice.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit =~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  // Standard normal via Box-Muller; generates pairs, caches the second.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sgmus
