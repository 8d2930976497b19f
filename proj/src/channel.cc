#include "sbsim/channel.h"

#include <algorithm>
#include <cmath>

namespace sbsim {

ProbeArray::ProbeArray(Address base, Address stride)
    : base_(base), stride_(stride) {
  if (stride < kLineSize) {
    throw ChannelError(ChannelError::Kind::kInvalidGeometry,
                       "probe stride must be at least one cache line");
  }
}

void ProbeArray::FlushAll(Cache& cache) const {
  for (int i = 0; i < kProbeSlots; ++i) cache.Flush(SlotAddress(i));
}

double TimingOracle::Sample(bool cached) {
  const double mean = cached ? params_.hit_mean : params_.miss_mean;
  if (params_.noise_sigma <= 0.0) return std::max(1.0, mean);
  return std::max(1.0, rng_.Normal(mean, params_.noise_sigma));
}

Latencies MeasureReload(const ProbeArray& array, const Cache& cache,
                        TimingOracle& oracle) {
  Latencies out{};
  for (int i = 0; i < kProbeSlots; ++i) {
    out[i] = oracle.Sample(cache.IsCached(array.SlotAddress(i)));
  }
  return out;
}

double CalibrateThreshold(std::span<const double> hit_samples,
                          std::span<const double> miss_samples) {
  if (hit_samples.empty() || miss_samples.empty()) {
    throw ChannelError(ChannelError::Kind::kEmptySamples,
                       "calibration needs hit and miss samples");
  }
  std::vector<double> hits(hit_samples.begin(), hit_samples.end());
  std::vector<double> misses(miss_samples.begin(), miss_samples.end());
  std::sort(hits.begin(), hits.end());
  std::sort(misses.begin(), misses.end());

  // Drop the slowest 1% of hits and the fastest 1% of misses.
  const std::size_t hit_drop = hits.size() / 100;
  const std::size_t miss_drop = misses.size() / 100;
  const double hit_max = hits[hits.size() - 1 - hit_drop];
  const double miss_min = misses[miss_drop];
  if (!(hit_max < miss_min)) {
    throw ChannelError(ChannelError::Kind::kDegenerateCalibration,
                       "hit and miss distributions overlap");
  }
  return (hit_max + miss_min) / 2.0;
}

double CalibrateFromOracle(TimingOracle& oracle, int samples) {
  std::vector<double> hits(samples), misses(samples);
  for (auto& h : hits) h = oracle.Sample(true);
  for (auto& m : misses) m = oracle.Sample(false);
  return CalibrateThreshold(hits, misses);
}

DecodeResult DecodeByte(const Latencies& latencies, double threshold) {
  DecodeResult r;
  int below = 0;
  int best = -1;
  for (int i = 0; i < kProbeSlots; ++i) {
    if (latencies[i] >= threshold) continue;
    ++below;
    if (best < 0 || latencies[i] < latencies[best]) best = i;
  }
  if (below == 0) return r;
  r.value = static_cast<std::uint8_t>(best);
  r.ambiguous = below > 1;
  return r;
}

}  // namespace sbsim
