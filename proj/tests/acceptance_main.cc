// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Optional arguments select criteria by id,
// e.g. `acceptance AC4 AC6`.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "program_gen.h"
#include "sbsim/channel.h"
#include "sbsim/cli.h"
#include "sbsim/dsl.h"
#include "sbsim/engine.h"
#include "sbsim/fuzzer.h"
#include "sbsim/machine.h"
#include "sbsim/microcode_lab.h"
#include "sbsim/table.h"

namespace sbsim {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

ExperimentConfig Config(const MicrocodeProfile& profile) {
  ExperimentConfig c;
  c.profile = profile;
  return c;
}

Outcome MitigationGate() {
  TableOptions opts;
  opts.budget = 200'000'000;
  opts.seed = 0;
  const auto rows = BuildTable(opts);
  int leaking = 0, silent = 0;
  bool pass = rows.size() == 11;
  for (const auto& row : rows) {
    const bool any = row.rate_clflush > 0 || row.rate_lockinc > 0 ||
                     row.rate_unmodified > 0;
    const bool all_zero = row.rate_clflush == 0 && row.rate_lockinc == 0 &&
                          row.rate_unmodified == 0;
    if (row.profile.forwarding_mitigated) {
      pass &= all_zero && !row.vulnerable;
      silent += all_zero;
    } else {
      pass &= any && row.vulnerable;
      leaking += any;
    }
  }
  return {pass && leaking == 7 && silent == 4,
          Format("%d/7 listed revisions leak, %d/4 later revisions silent",
                 leaking, silent)};
}

Outcome RateOrdering() {
  const Cycle budget = 1'000'000'000;
  int cases = 0, ok = 0;
  double worst_ratio = 0.0;
  for (const auto& profile : BuiltinMicrocodeProfiles()) {
    if (profile.forwarding_mitigated) continue;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto secret = GenerateSecret(64, seed);
      auto rate = [&](PrepOp prep) {
        return RunExperiment(Config(profile),
                             CanonicalMsbdsProgram(prep, FaultClass::kUS),
                             secret, budget, seed)
            .rate;
      };
      const double lockinc = rate(PrepOp::kLockInc);
      const double clflush = rate(PrepOp::kClflush);
      const double none = rate(PrepOp::kNone);
      ++cases;
      const bool good = lockinc >= clflush && clflush > none && none > 0 &&
                        none < 0.01 * lockinc;
      ok += good;
      if (lockinc > 0) worst_ratio = std::max(worst_ratio, none / lockinc);
      if (!good) {
        std::printf("  %s seed %llu: lockinc %.2f clflush %.2f none %.2f\n",
                    FormatRevision(profile.revision).c_str(),
                    static_cast<unsigned long long>(seed), lockinc, clflush,
                    none);
      }
    }
  }
  return {ok == cases && cases == 70,
          Format("%d/%d (profile, seed) cases ordered, worst "
                 "unmodified/lockinc %.4f",
                 ok, cases, worst_ratio)};
}

Outcome FaultClassGate() {
  const ExperimentConfig config = Config(*FindBuiltinProfile(0x48));
  // 1152 genomes per fault class, 3 trials each.
  constexpr int kTrials = 3;
  std::array<long, 4> attempts{}, leaks{};
  for (std::size_t i = 0; i < kGenomeSpaceSize; ++i) {
    const Genome g = GenomeFromIndex(i);
    const Evaluation e = EvaluateGenome(config, g, kTrials, i);
    const auto k = static_cast<std::size_t>(g.fault_class);
    attempts[k] += kTrials;
    leaks[k] += static_cast<long>(e.score * kTrials + 0.5);
  }
  const auto none = static_cast<std::size_t>(FaultClass::kNone);
  const auto us = static_cast<std::size_t>(FaultClass::kUS);
  const auto pk = static_cast<std::size_t>(FaultClass::kPK);
  const auto np = static_cast<std::size_t>(FaultClass::kNP);
  const bool enough = attempts[none] >= 1000 && attempts[np] >= 1000;
  return {enough && leaks[us] > 0 && leaks[pk] > 0 && leaks[np] == 0 &&
              leaks[none] == 0,
          Format("leaks us %ld/%ld pk %ld/%ld np %ld/%ld none %ld/%ld",
                 leaks[us], attempts[us], leaks[pk], attempts[pk], leaks[np],
                 attempts[np], leaks[none], attempts[none])};
}

// Recomputes the forwarding decision from the raw inserts, without the
// store buffer's lookup.
struct RawStore {
  Address vaddr;
  std::uint32_t size;
  Cycle at;
  CacheLineState state;
  PrepOp prep;
};

bool OracleForward(AccessOutcome fault, bool mitigated, const TimingModel& tm,
                   const std::vector<RawStore>& stores, Address load_addr,
                   std::uint32_t load_size, Cycle t) {
  if (fault != AccessOutcome::kFaultUS && fault != AccessOutcome::kFaultPK) {
    return false;
  }
  if (mitigated) return false;
  const Address want_lo = load_addr % 4096, want_hi = want_lo + load_size;
  for (const RawStore& s : stores) {
    Cycle residency = tm.drain_cached;
    if (s.prep == PrepOp::kLockInc) {
      residency = tm.drain_locked;
    } else if (s.prep == PrepOp::kClflush ||
               s.state == CacheLineState::kInvalid) {
      residency = tm.drain_flushed;
    }
    const Address lo = s.vaddr % 4096, hi = lo + s.size;
    if (t < s.at + residency && lo <= want_lo && want_hi <= hi) return true;
  }
  return false;
}

Outcome ForwardingOracle() {
  Rng rng(4);
  const auto profiles = BuiltinMicrocodeProfiles();
  const AccessOutcome outcomes[] = {AccessOutcome::kOk, AccessOutcome::kFaultUS,
                                    AccessOutcome::kFaultPK,
                                    AccessOutcome::kFaultNP};
  const CacheLineState states[] = {
      CacheLineState::kInvalid, CacheLineState::kShared,
      CacheLineState::kExclusive, CacheLineState::kModified};
  const PrepOp preps[] = {PrepOp::kNone, PrepOp::kClflush, PrepOp::kLockInc};
  int mismatches = 0, forwarded = 0;
  constexpr int kCases = 100000;
  for (int i = 0; i < kCases; ++i) {
    TimingModel tm;
    tm.drain_cached = 1 + rng.UniformInt(20);
    tm.drain_flushed = tm.drain_cached + 1 + rng.UniformInt(200);
    tm.drain_locked = tm.drain_flushed + 1 + rng.UniformInt(200);
    const MicrocodeProfile& profile = profiles[rng.UniformInt(profiles.size())];
    const AccessOutcome fault = outcomes[rng.UniformInt(4)];

    StoreBuffer sb;
    std::vector<RawStore> raw;
    const Address line = rng.UniformInt(64) * 64;
    Cycle now = rng.UniformInt(100);
    const int n = static_cast<int>(rng.UniformInt(6));
    for (int k = 0; k < n; ++k) {
      const auto size = 1 + static_cast<std::uint32_t>(rng.UniformInt(8));
      const Address vaddr = (1 + rng.UniformInt(8)) * kPageSize + line +
                            rng.UniformInt(65 - size);
      const RawStore s{vaddr, size, now, states[rng.UniformInt(4)],
                       preps[rng.UniformInt(3)]};
      const std::vector<std::uint8_t> data(size, 0xab);
      sb.Insert(s.vaddr, data, s.at, s.state, s.prep, tm);
      raw.push_back(s);
      now += rng.UniformInt(10);
    }
    auto load_size = 1 + static_cast<std::uint32_t>(rng.UniformInt(8));
    Address load_addr = 0x40000 + line + rng.UniformInt(65 - load_size);
    if (!raw.empty() && rng.UniformInt(2) == 0) {
      // Aim inside one of the stores so the positive branch is exercised.
      const RawStore& s = raw[rng.UniformInt(raw.size())];
      load_size = 1 + static_cast<std::uint32_t>(rng.UniformInt(s.size));
      load_addr = 0x40000 + PageOffset(s.vaddr) +
                  rng.UniformInt(s.size - load_size + 1);
    }
    const Cycle t = now + rng.UniformInt(tm.drain_locked + 20);

    const auto entry = sb.LookupAlias(PageOffset(load_addr), load_size, t);
    const bool got = ForwardDecision(fault, entry.has_value(),
                                     profile.forwarding_mitigated, t, entry);
    const bool want = OracleForward(fault, profile.forwarding_mitigated, tm,
                                    raw, load_addr, load_size, t);
    mismatches += got != want;
    forwarded += want;
  }
  return {mismatches == 0,
          Format("%d mismatches over %d cases (%d forwarding)", mismatches,
                 kCases, forwarded)};
}

Outcome FuzzerRediscovery() {
  auto hits = [](std::uint32_t revision) {
    int found = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const FuzzReport r =
          FuzzLoop(Config(*FindBuiltinProfile(revision)), {}, 10000, seed);
      bool hit = false;
      for (const auto& p : r.positives) {
        hit |= p.label == VariantLabel::kMeltdownUS_SB ||
               p.label == VariantLabel::kMeltdownMPK_SB;
      }
      found += hit;
    }
    return found;
  };
  const int vulnerable = hits(0x48);
  const int mitigated = hits(0x86);
  return {vulnerable >= 18 && mitigated == 0,
          Format("0x48 %d/20 seeds found a variant, 0x86 %d/20", vulnerable,
                 mitigated)};
}

Outcome ChannelAccuracy() {
  const ProbeArray probe(0x10000000);
  TimingOracle calibration(OracleParams{}, DeriveSeed(1, Stream::kCalibration));
  const double threshold = CalibrateFromOracle(calibration);
  TimingOracle oracle(OracleParams{}, DeriveSeed(1, Stream::kOracleNoise));
  Rng rng(DeriveSeed(1, Stream::kSecret));
  constexpr int kTrials = 10000;
  int correct = 0;
  for (int i = 0; i < kTrials; ++i) {
    Cache cache;
    const auto byte = static_cast<std::uint8_t>(rng.UniformInt(256));
    cache.Touch(probe.SlotAddress(byte), AccessKind::kRead);
    const DecodeResult r =
        DecodeByte(MeasureReload(probe, cache, oracle), threshold);
    correct += r.value == byte && !r.ambiguous;
  }
  return {correct * 1000 >= kTrials * 999,
          Format("%d/%d bytes decoded, threshold %.1f", correct, kTrials,
                 threshold)};
}

Outcome CheckerFidelity() {
  int rows_ok = 0;
  for (const auto& p : BuiltinMicrocodeProfiles()) {
    const Assessment a =
        Assess({"GenuineIntel", 6, 126, 5, p.revision, 0x20});
    const auto want = p.forwarding_mitigated
                          ? AssessmentStatus::kMitigated
                          : AssessmentStatus::kVulnerableMSBDS;
    rows_ok += a.status == want;
  }
  const Assessment v = Assess({"GenuineIntel", 6, 126, 5, 0x48, 0x20});
  const Assessment pm = Assess({"GenuineIntel", 6, 126, 5, 0x5c, 0x20});
  const bool pass = rows_ok == 11 &&
                    v.status == AssessmentStatus::kVulnerableMSBDS &&
                    v.errata_057 &&
                    pm.status == AssessmentStatus::kPresumedMitigated;
  return {pass, Format("%d/11 rows, 0x48 %s errata=%d, 0x5c %s", rows_ok,
                       std::string(ToString(v.status)).c_str(), v.errata_057,
                       std::string(ToString(pm.status)).c_str())};
}

Outcome DslRoundTrip() {
  Rng rng(8);
  int ok = 0;
  constexpr int kPrograms = 1000;
  for (int i = 0; i < kPrograms; ++i) {
    const AttackProgram p = testing::RandomProgram(rng);
    try {
      ok += ParseProgram(SerializeProgram(p)) == p;
    } catch (const DslError&) {
    }
  }
  return {ok == kPrograms, Format("%d/%d programs round-trip", ok, kPrograms)};
}

std::string RunToString(std::vector<std::string> args, int* code) {
  args.insert(args.begin(), "sbsim");
  std::ostringstream out, err;
  *code = RunCli(args, out, err);
  return out.str();
}

Outcome Determinism() {
  int codes[6];
  const std::string fuzz_a = RunToString({"--seed", "7", "fuzz"}, &codes[0]);
  const std::string fuzz_b = RunToString({"--seed", "7", "fuzz"}, &codes[1]);
  const std::string fuzz_p =
      RunToString({"--seed", "7", "fuzz", "--jobs", "4"}, &codes[2]);
  const std::vector<std::string> table = {"--seed", "7", "table", "--budget",
                                          "200000000"};
  auto with_jobs = table;
  with_jobs.insert(with_jobs.end(), {"--jobs", "4"});
  const std::string table_a = RunToString(table, &codes[3]);
  const std::string table_b = RunToString(table, &codes[4]);
  const std::string table_p = RunToString(with_jobs, &codes[5]);
  bool codes_ok = true;
  for (int c : codes) codes_ok &= c == 0;
  const bool fuzz_same = fuzz_a == fuzz_b && fuzz_a == fuzz_p;
  const bool table_same = table_a == table_b && table_a == table_p;
  return {codes_ok && fuzz_same && table_same && !fuzz_a.empty() &&
              !table_a.empty(),
          Format("fuzz %s, table %s (serial x2 and --jobs 4)",
                 fuzz_same ? "identical" : "DIFFERS",
                 table_same ? "identical" : "DIFFERS")};
}

struct Criterion {
  const char* id;
  const char* name;
  double max_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace sbsim

int main(int argc, char** argv) {
  using namespace sbsim;
  const Criterion criteria[] = {
      {"AC1", "mitigation gate", 30, MitigationGate},
      {"AC2", "rate ordering", 60, RateOrdering},
      {"AC3", "fault-class gate", 0, FaultClassGate},
      {"AC4", "forwarding oracle", 10, ForwardingOracle},
      {"AC5", "fuzzer rediscovery", 300, FuzzerRediscovery},
      {"AC6", "channel accuracy", 5, ChannelAccuracy},
      {"AC7", "checker fidelity", 0, CheckerFidelity},
      {"AC8", "dsl round trip", 0, DslRoundTrip},
      {"AC9", "determinism", 0, Determinism},
  };
  const std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) {
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    const bool in_time = c.max_seconds <= 0 || secs < c.max_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %s %s: %s [%.1fs%s]\n", pass ? "PASS" : "FAIL", c.id,
                c.name, o.detail.c_str(), secs,
                in_time ? "" : ", over time limit");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
