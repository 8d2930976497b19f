#include "sbsim/config.h"

#include <cctype>
#include <charconv>
#include <cstdlib>

namespace sbsim {

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::uint64_t ParseCycles(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + std::string(key) +
                      "' needs a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

double ParseReal(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ConfigError("'" + std::string(key) + "' needs a number, got '" + s +
                      "'");
  }
  return out;
}

}  // namespace

void ApplyConfigValue(SimConfig& config, std::string_view key,
                      std::string_view value) {
  value = Trim(value);
  TimingModel& t = config.timing;
  struct CycleField {
    std::string_view name;
    Cycle TimingModel::*field;
  };
  static constexpr CycleField kCycleFields[] = {
      {"hit_latency", &TimingModel::hit_latency},
      {"miss_latency", &TimingModel::miss_latency},
      {"drain_cached", &TimingModel::drain_cached},
      {"drain_flushed", &TimingModel::drain_flushed},
      {"drain_locked", &TimingModel::drain_locked},
      {"transient_window", &TimingModel::transient_window},
      {"nominal_frequency", &TimingModel::nominal_frequency},
      {"load_lookup_delay", &TimingModel::load_lookup_delay},
      {"issue_jitter", &TimingModel::issue_jitter},
  };
  for (const auto& f : kCycleFields) {
    if (key == f.name) {
      t.*(f.field) = ParseCycles(key, value);
      return;
    }
  }
  if (key == "hit_mean") {
    config.oracle.hit_mean = ParseReal(key, value);
  } else if (key == "miss_mean") {
    config.oracle.miss_mean = ParseReal(key, value);
  } else if (key == "noise_sigma") {
    config.oracle.noise_sigma = ParseReal(key, value);
  } else if (key == "probe_stride") {
    config.probe_stride = ParseCycles(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

void ApplyConfigText(SimConfig& config, std::string_view text) {
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    line = Trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    ApplyConfigValue(config, Trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

}  // namespace sbsim
