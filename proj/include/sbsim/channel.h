#ifndef SBSIM_CHANNEL_H_
#define SBSIM_CHANNEL_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sbsim/machine.h"
#include "sbsim/rng.h"

namespace sbsim {

inline constexpr int kProbeSlots = 256;

using Latencies = std::array<double, kProbeSlots>;

class ChannelError : public std::runtime_error {
 public:
  enum class Kind { kEmptySamples, kDegenerateCalibration, kInvalidGeometry };

  ChannelError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Slot i lives at base + i * stride.
class ProbeArray {
 public:
  // Throws ChannelError(kInvalidGeometry) if stride < 64.
  explicit ProbeArray(Address base, Address stride = kPageSize);

  Address base() const { return base_; }
  Address stride() const { return stride_; }
  Address SlotAddress(int slot) const {
    return base_ + static_cast<Address>(slot) * stride_;
  }

  void FlushAll(Cache& cache) const;

 private:
  Address base_;
  Address stride_;
};

struct OracleParams {
  double hit_mean = 40.0;
  double miss_mean = 300.0;
  double noise_sigma = 20.0;

  friend bool operator==(const OracleParams&, const OracleParams&) = default;
};

// Noisy reload timer. Holds its own RNG; one per experiment.
class TimingOracle {
 public:
  TimingOracle(const OracleParams& params, std::uint64_t seed)
      : params_(params), rng_(seed) {}

  // Normal(mean, sigma) truncated at 1 cycle.
  double Sample(bool cached);

  const OracleParams& params() const { return params_; }

 private:
  OracleParams params_;
  Rng rng_;
};

Latencies MeasureReload(const ProbeArray& array, const Cache& cache,
                        TimingOracle& oracle);

// Midpoint between the 99th-percentile hit and the 1st-percentile miss.
// Throws ChannelError(kEmptySamples) or (kDegenerateCalibration) when the
// trimmed distributions overlap.
double CalibrateThreshold(std::span<const double> hit_samples,
                          std::span<const double> miss_samples);

// Draws `samples` of each kind from the oracle and calibrates on them.
double CalibrateFromOracle(TimingOracle& oracle, int samples = 1000);

struct DecodeResult {
  std::optional<std::uint8_t> value;
  bool ambiguous = false;

  friend bool operator==(const DecodeResult&, const DecodeResult&) = default;
};

// One slot below threshold decodes to it; several decode to the fastest,
// flagged ambiguous; none decodes to nothing.
DecodeResult DecodeByte(const Latencies& latencies, double threshold);

}  // namespace sbsim

#endif  // SBSIM_CHANNEL_H_
