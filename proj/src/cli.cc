#include "sbsim/cli.h"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"
#include "sbsim/config.h"
#include "sbsim/dsl.h"
#include "sbsim/engine.h"
#include "sbsim/fuzzer.h"
#include "sbsim/microcode_lab.h"
#include "sbsim/table.h"

namespace sbsim {

namespace {

using ordered_json = nlohmann::ordered_json;

// Raised for flag values CLI11 accepts syntactically but we reject.
struct BadFlag : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) return std::nullopt;
  return ss.str();
}

std::uint64_t ParseCount(const std::string& flag, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || v < 0 ||
      v != static_cast<double>(static_cast<std::uint64_t>(v))) {
    throw BadFlag(flag + " needs a non-negative integer, got '" + text + "'");
  }
  return static_cast<std::uint64_t>(v);
}

MicrocodeProfile ParseProfile(const std::string& text) {
  std::uint32_t rev = 0;
  std::string digits = text;
  if (digits.rfind("0x", 0) == 0 || digits.rfind("0X", 0) == 0) {
    digits = digits.substr(2);
  }
  std::istringstream ss(digits);
  ss >> std::hex >> rev;
  if (digits.empty() || !ss.eof() || ss.fail()) {
    throw BadFlag("bad --profile '" + text + "'");
  }
  auto profile = FindBuiltinProfile(rev);
  if (!profile) {
    throw BadFlag("unknown microcode profile " + FormatRevision(rev));
  }
  return *profile;
}

FaultClass ParseFault(const std::string& text) {
  if (text == "us") return FaultClass::kUS;
  if (text == "pk") return FaultClass::kPK;
  if (text == "np") return FaultClass::kNP;
  throw BadFlag("fault must be us, pk or np, got '" + text + "'");
}

PrepOp ParsePrep(const std::string& text) {
  auto prep = ParsePrepOp(text);
  if (!prep) throw BadFlag("prep must be none, clflush or lockinc");
  return *prep;
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw BadFlag("cannot write " + path);
      out_ = &file_;
    }
  }
  std::ostream& stream() { return *out_; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

struct GlobalFlags {
  std::uint64_t seed = 0;
  std::string config_path;
  bool json = false;
  std::vector<std::pair<std::string, std::string>> overrides;
};

SimConfig LoadSimConfig(const GlobalFlags& g) {
  SimConfig sim;
  try {
    if (!g.config_path.empty()) {
      auto text = ReadFile(g.config_path);
      if (!text) throw BadFlag("cannot read config " + g.config_path);
      ApplyConfigText(sim, *text);
    }
    for (const auto& [key, value] : g.overrides) {
      ApplyConfigValue(sim, key, value);
    }
    sim.timing.Validate();
    ProbeArray(0, sim.probe_stride);
  } catch (const ConfigError& e) {
    throw BadFlag(e.what());
  } catch (const SimError& e) {
    throw BadFlag(e.what());
  } catch (const ChannelError& e) {
    throw BadFlag(e.what());
  }
  return sim;
}

std::string HexBytes(const LeakageReport& r) {
  std::string out(r.secret_len * 2, '?');
  static constexpr char kDigits[] = "0123456789abcdef";
  for (const auto& b : r.recovered) {
    out[2 * b.position] = kDigits[b.value >> 4];
    out[2 * b.position + 1] = kDigits[b.value & 0xf];
  }
  return out;
}

std::vector<std::uint8_t> ParseSecretHex(const std::string& hex) {
  if (hex.empty() || hex.size() % 2 != 0) {
    throw BadFlag("--secret needs an even number of hex digits");
  }
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    unsigned v = 0;
    std::istringstream ss(hex.substr(i, 2));
    ss >> std::hex >> v;
    if (ss.fail() || !ss.eof()) throw BadFlag("--secret is not hex");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Store-buffer leak simulator, variant fuzzer and microcode "
               "checker"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--config", g.config_path, "key=value timing/oracle file");
  app.add_flag("--json", g.json, "Emit JSON instead of text");
  auto add_override = [&](const std::string& flag, const std::string& key,
                          const std::string& help) {
    app.add_option_function<std::string>(
        flag, [&g, key](const std::string& v) { g.overrides.emplace_back(key, v); },
        help);
  };
  add_override("--hit-latency", "hit_latency", "Cache hit latency (cycles)");
  add_override("--miss-latency", "miss_latency", "Cache miss latency (cycles)");
  add_override("--drain-cached", "drain_cached", "Store drain, cached line");
  add_override("--drain-flushed", "drain_flushed", "Store drain, flushed line");
  add_override("--drain-locked", "drain_locked", "Store drain after lock inc");
  add_override("--transient-window", "transient_window",
               "Cycles of transient execution after a fault");
  add_override("--frequency", "nominal_frequency", "Cycles per second");
  add_override("--load-lookup-delay", "load_lookup_delay",
               "Load issue to store-buffer probe (cycles)");
  add_override("--issue-jitter", "issue_jitter",
               "Span of the per-attempt probe jitter (cycles)");
  add_override("--hit-mean", "hit_mean", "Reload timing: cached mean");
  add_override("--miss-mean", "miss_mean", "Reload timing: uncached mean");
  add_override("--noise-sigma", "noise_sigma", "Reload timing noise sigma");
  add_override("--probe-stride", "probe_stride", "Probe array stride (bytes)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run one leakage experiment");
  std::string sim_profile = "0x48", sim_prep = "lockinc", sim_fault = "us";
  std::string sim_variant, sim_program, sim_secret, sim_budget, sim_output;
  std::size_t sim_secret_len = 64;
  simulate->add_option("--profile", sim_profile, "Microcode revision");
  simulate->add_option("--prep", sim_prep, "none | clflush | lockinc");
  simulate->add_option("--fault", sim_fault, "us | pk | np");
  simulate->add_option("--variant", sim_variant,
                       "Canonical variant <prep>-<fault>, e.g. lockinc-us");
  simulate->add_option("--program", sim_program, "Attack program (.sbl)");
  simulate->add_option("--secret-len", sim_secret_len, "Random secret length");
  simulate->add_option("--secret", sim_secret, "Secret as hex bytes");
  simulate->add_option("--budget", sim_budget, "Simulated cycle budget");
  simulate->add_option("--output", sim_output, "Write report to file");

  // table
  auto* table = app.add_subcommand("table", "Leakage rate per microcode");
  std::size_t table_secret_len = 64;
  std::string table_budget, table_output;
  int table_jobs =
      static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  table->add_option("--secret-len", table_secret_len, "Secret length");
  table->add_option("--budget", table_budget, "Cycle budget per experiment");
  table->add_option("--jobs", table_jobs,
                    "Worker threads (default: all cores)")
      ->check(CLI::PositiveNumber);
  table->add_option("--output", table_output, "Write CSV to file");

  // fuzz
  auto* fuzz = app.add_subcommand("fuzz", "Search for leaking variants");
  std::string fuzz_profile = "0x48", fuzz_iters = "10000", fuzz_output;
  FuzzOptions fuzz_opts;
  fuzz->add_option("--profile", fuzz_profile, "Microcode revision");
  fuzz->add_option("--max-iters", fuzz_iters, "Iteration limit");
  fuzz->add_option("--trials", fuzz_opts.trials, "Attempts per evaluation")
      ->check(CLI::PositiveNumber);
  fuzz->add_option("--restart-after", fuzz_opts.restart_after,
                   "Non-improving iterations before a restart")
      ->check(CLI::PositiveNumber);
  fuzz->add_flag("--first-hit", fuzz_opts.first_hit,
                 "Stop at the first labelled variant");
  fuzz->add_option("--jobs", fuzz_opts.jobs, "Worker threads")
      ->check(CLI::PositiveNumber);
  fuzz->add_option("--output", fuzz_output, "Write JSON to file");

  // check
  auto* check = app.add_subcommand("check", "Assess a CPU snapshot file");
  std::string snapshot_path;
  check->add_option("snapshot", snapshot_path, "Snapshot file")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitBadFlags;
  }

  try {
    if (*check) {
      auto text = ReadFile(snapshot_path);
      if (!text) {
        err << "cannot read snapshot " << snapshot_path << "\n";
        return kExitSnapshotError;
      }
      CpuSnapshot snap;
      try {
        snap = ParseSnapshot(*text);
      } catch (const SnapshotError& e) {
        err << snapshot_path << ": " << e.what() << "\n";
        return kExitSnapshotError;
      }
      const Assessment a = Assess(snap);
      if (g.json) {
        ordered_json j;
        j["status"] = ToString(a.status);
        j["errata_057"] = a.errata_057;
        j["rationale"] = a.rationale;
        out << j.dump(2) << "\n";
      } else {
        out << FormatAssessment(a);
      }
      return a.status == AssessmentStatus::kVulnerableMSBDS ? kExitVulnerable
                                                            : kExitOk;
    }

    const SimConfig sim = LoadSimConfig(g);

    if (*simulate) {
      const MicrocodeProfile profile = ParseProfile(sim_profile);
      PrepOp prep = ParsePrep(sim_prep);
      FaultClass fault = ParseFault(sim_fault);
      if (!sim_variant.empty()) {
        const auto dash = sim_variant.find('-');
        if (dash == std::string::npos) {
          throw BadFlag("--variant must look like lockinc-us");
        }
        prep = ParsePrep(sim_variant.substr(0, dash));
        fault = ParseFault(sim_variant.substr(dash + 1));
      }
      const Cycle budget = sim_budget.empty()
                               ? kDefaultBudget
                               : ParseCount("--budget", sim_budget);
      const std::vector<std::uint8_t> secret =
          sim_secret.empty() ? GenerateSecret(sim_secret_len, g.seed)
                             : ParseSecretHex(sim_secret);

      AttackProgram program;
      if (!sim_program.empty()) {
        auto text = ReadFile(sim_program);
        if (!text) {
          err << "cannot read program " << sim_program << "\n";
          return kExitProgramError;
        }
        program = ParseProgram(*text);
      } else {
        program = CanonicalMsbdsProgram(prep, fault);
      }

      Output o(sim_output, out);
      const LeakageReport r = RunExperiment(sim.ForProfile(profile), program,
                                            secret, budget, g.seed);
      if (g.json) {
        ordered_json j;
        j["profile"] = FormatRevision(profile.revision);
        j["program"] = sim_program.empty()
                           ? std::string(ToString(prep)) + "-" +
                                 std::string(ToString(fault))
                           : sim_program;
        j["secret_len"] = r.secret_len;
        j["attempts"] = r.attempts;
        j["forwarded_attempts"] = r.forwarded_attempts;
        j["sim_cycles"] = r.sim_cycles;
        j["correct"] = r.correct;
        j["rate"] = r.rate;
        j["recovered"] = ordered_json::array();
        for (const auto& b : r.recovered) {
          j["recovered"].push_back(
              {{"position", b.position}, {"value", b.value},
               {"confidence", b.confidence}});
        }
        o.stream() << j.dump(2) << "\n";
      } else {
        auto& s = o.stream();
        s << "profile: " << FormatRevision(profile.revision) << "\n";
        if (sim_program.empty()) {
          s << "prep: " << ToString(prep) << "\n";
          s << "fault: " << ToString(fault) << "\n";
        } else {
          s << "program: " << sim_program << "\n";
        }
        s << "secret_len: " << r.secret_len << "\n";
        s << "recovered: " << r.recovered.size() << "\n";
        s << "correct: " << r.correct << "\n";
        s << "attempts: " << r.attempts << "\n";
        s << "forwarded_attempts: " << r.forwarded_attempts << "\n";
        s << "sim_cycles: " << r.sim_cycles << "\n";
        s << "rate: " << FormatRate(r.rate) << "\n";
        s << "bytes: " << HexBytes(r) << "\n";
      }
      return kExitOk;
    }

    if (*table) {
      TableOptions opts;
      opts.sim = sim;
      opts.secret_len = table_secret_len;
      opts.budget = table_budget.empty()
                        ? kDefaultBudget
                        : ParseCount("--budget", table_budget);
      opts.seed = g.seed;
      opts.jobs = table_jobs;
      const auto rows = BuildTable(opts);
      Output o(table_output, out);
      if (g.json) {
        ordered_json j = ordered_json::array();
        for (const auto& row : rows) {
          j.push_back({{"mc_version", FormatRevision(row.profile.revision)},
                       {"mc_date", FormatDate(row.profile.date)},
                       {"vulnerable", row.vulnerable},
                       {"clflush_rate", row.rate_clflush},
                       {"lockinc_rate", row.rate_lockinc},
                       {"unmodified_rate", row.rate_unmodified}});
        }
        o.stream() << j.dump(2) << "\n";
      } else {
        o.stream() << FormatTableCsv(rows);
      }
      return kExitOk;
    }

    if (*fuzz) {
      const MicrocodeProfile profile = ParseProfile(fuzz_profile);
      const std::uint64_t iters = ParseCount("--max-iters", fuzz_iters);
      if (iters == 0) throw BadFlag("--max-iters must be > 0");
      const FuzzReport r =
          FuzzLoop(sim.ForProfile(profile), fuzz_opts, iters, g.seed);
      Output o(fuzz_output, out);
      o.stream() << FuzzReportToJson(r) << "\n";
      return kExitOk;
    }
  } catch (const BadFlag& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadFlags;
  } catch (const DslError& e) {
    err << "program error: " << e.what() << "\n";
    return kExitProgramError;
  } catch (const SimError& e) {
    err << "program error: " << e.what() << "\n";
    return kExitProgramError;
  }
  return kExitBadFlags;
}

}  // namespace sbsim
