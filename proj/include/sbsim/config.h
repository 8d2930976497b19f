#ifndef SBSIM_CONFIG_H_
#define SBSIM_CONFIG_H_

#include <stdexcept>
#include <string>
#include <string_view>

#include "sbsim/channel.h"
#include "sbsim/engine.h"
#include "sbsim/machine.h"

namespace sbsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  TimingModel timing;
  OracleParams oracle;
  Address probe_stride = kPageSize;

  ExperimentConfig ForProfile(const MicrocodeProfile& profile) const {
    ExperimentConfig c;
    c.timing = timing;
    c.oracle = oracle;
    c.profile = profile;
    c.probe_stride = probe_stride;
    return c;
  }
};

// Keys are the TimingModel field names (integer cycles), hit_mean,
// miss_mean, noise_sigma and probe_stride. Throws ConfigError.
void ApplyConfigValue(SimConfig& config, std::string_view key,
                      std::string_view value);

// `key = value` lines with `#` comments. Throws ConfigError.
void ApplyConfigText(SimConfig& config, std::string_view text);

}  // namespace sbsim

#endif  // SBSIM_CONFIG_H_
