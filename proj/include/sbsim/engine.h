#ifndef SBSIM_ENGINE_H_
#define SBSIM_ENGINE_H_

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "sbsim/channel.h"
#include "sbsim/dsl.h"
#include "sbsim/machine.h"

namespace sbsim {

struct AttemptResult {
  AccessOutcome fault = AccessOutcome::kOk;
  bool forwarded = false;
  std::set<std::uint8_t> transient_touches;
  Cycle cycles_consumed = 0;
};

// True iff a faulting load of class US or PK hits a live aliased store on an
// unmitigated microcode. Pure.
bool ForwardDecision(AccessOutcome fault, bool alias_hit, bool mitigated,
                     Cycle load_time,
                     const std::optional<StoreBufferEntry>& entry);

// Applies a fault class to a page mapping. kNone maps an ordinary user page.
PageMapping MappingFor(Address vaddr, FaultClass fault);

// Binds every declared symbol of `program` to a fixed address and maps its
// pages. Page symbols get one page each; probe symbols get 256 slots at the
// machine's probe stride.
void MapProgramSymbols(MachineState& machine, const AttackProgram& program);

// Executes the program once. The faulting load probes the store buffer at
// issue + load_lookup_delay + probe_jitter. Instructions after a fault run
// transiently for at most transient_window cycles; only their cache touches
// survive. Throws SimError(kUnboundSymbol) or (kStoreSplitUnsupported).
AttemptResult RunAttempt(MachineState& machine, const AttackProgram& program,
                         Cycle probe_jitter = 0);

struct ExperimentConfig {
  TimingModel timing;
  OracleParams oracle;
  MicrocodeProfile profile;
  Address probe_stride = kPageSize;
  // Unambiguous agreeing decodes needed before a position counts as
  // recovered.
  int confirmations = 1;
};

// One Flush+Reload round trip over a prepared machine: flush the probe
// array, warm the store lines, run the program, reload, decode.
class AttackHarness {
 public:
  // Maps `program`'s symbols. Every program run through the harness must
  // use the same symbol declarations.
  AttackHarness(const ExperimentConfig& config, const AttackProgram& program,
                std::uint64_t seed);

  struct Trial {
    AttemptResult attempt;
    DecodeResult decoded;
  };

  Trial Run(const AttackProgram& program);

  const MachineState& machine() const { return machine_; }
  double threshold() const { return threshold_; }

 private:
  MachineState machine_;
  ProbeArray probe_;
  TimingOracle oracle_;
  Rng jitter_rng_;
  double threshold_;
};

struct RecoveredByte {
  std::size_t position = 0;
  std::uint8_t value = 0;
  double confidence = 0.0;  // agreeing / all unambiguous decodes there
};

struct LeakageReport {
  std::size_t secret_len = 0;
  std::vector<RecoveredByte> recovered;  // sorted by position
  std::size_t correct = 0;
  std::uint64_t attempts = 0;
  std::uint64_t forwarded_attempts = 0;
  Cycle sim_cycles = 0;
  double rate = 0.0;  // correct bytes per simulated second
};

// Round-robins one attempt per unrecovered secret position until every
// position is recovered or `budget` cycles have elapsed. Deterministic in
// (config, program, secret, budget, seed).
LeakageReport RunExperiment(const ExperimentConfig& config,
                            const AttackProgram& program_template,
                            std::span<const std::uint8_t> secret, Cycle budget,
                            std::uint64_t seed);

std::vector<std::uint8_t> GenerateSecret(std::size_t length,
                                         std::uint64_t seed);

}  // namespace sbsim

#endif  // SBSIM_ENGINE_H_
