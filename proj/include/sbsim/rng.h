#ifndef SBSIM_RNG_H_
#define SBSIM_RNG_H_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sbsim {

// SplitMix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t index = 0) {
  return Mix64(Mix64(Mix64(seed) ^ stream) ^ index);
}

// Stream identifiers for DeriveSeed.
enum class Stream : std::uint64_t {
  kSecret = 1,
  kJitter = 2,
  kOracleNoise = 3,
  kCalibration = 4,
  kFuzzStep = 5,
  kFuzzEval = 6,
  kTrialByte = 7,
};

constexpr std::uint64_t DeriveSeed(std::uint64_t seed, Stream stream,
                                   std::uint64_t index = 0) {
  return DeriveSeed(seed, static_cast<std::uint64_t>(stream), index);
}

// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The distributions are not, so they are written out here to keep
// reports byte-stable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t Next() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t UniformInt(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  // Uniform real in [0, 1).
  double UniformReal() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double Normal(double mean, double sigma) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + sigma * spare_;
    }
    // Marsaglia polar method.
    double u, v, s;
    do {
      u = 2.0 * UniformReal() - 1.0;
      v = 2.0 * UniformReal() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return mean + sigma * u * f;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sbsim

#endif  // SBSIM_RNG_H_
