#ifndef SBSIM_FUZZER_H_
#define SBSIM_FUZZER_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sbsim/dsl.h"
#include "sbsim/engine.h"
#include "sbsim/rng.h"

namespace sbsim {

enum class AliasMode {
  kSamePageSameOffset,
  kCrossPageSameOffset,
  kCrossPageDifferentOffset,
};

std::string_view ToString(AliasMode mode);

// One point in the mutation space over attack primitives.
struct Genome {
  FaultClass fault_class = FaultClass::kNone;
  PrepOp prep = PrepOp::kNone;
  AliasMode alias_mode = AliasMode::kSamePageSameOffset;
  std::uint32_t store_size = 8;  // 1-8
  std::uint32_t load_size = 1;   // 1-8
  bool fence_before_load = false;

  friend bool operator==(const Genome&, const Genome&) = default;
};

// 4 fault classes * 3 preps * 3 alias modes * 8 * 8 sizes * 2 fence flags.
inline constexpr std::size_t kGenomeSpaceSize = 4 * 3 * 3 * 8 * 8 * 2;

std::size_t GenomeIndex(const Genome& g);
Genome GenomeFromIndex(std::size_t index);

Genome RandomGenome(Rng& rng);
// Changes exactly one field, chosen uniformly, to a different value chosen
// uniformly among that field's other values.
Genome MutateGenome(const Genome& g, Rng& rng);

// Builds the attack program a genome describes. The faulting page is B for
// cross-page modes and the store page A itself for kSamePageSameOffset.
AttackProgram GenomeProgram(const Genome& g);

enum class VariantLabel { kMeltdownUS_SB, kMeltdownMPK_SB, kNoLeak };

std::string_view ToString(VariantLabel label);

struct Evidence {
  AccessOutcome fault = AccessOutcome::kOk;
  bool bytes_match = false;  // leaked byte equals planted store byte
};

VariantLabel Classify(const Genome& genome, const Evidence& evidence);

struct Evaluation {
  double score = 0.0;
  Evidence evidence;
  VariantLabel label = VariantLabel::kNoLeak;
};

// Runs `trials` attempts planting a fresh random byte each time. A trial
// counts as a leak when its load faulted and the decoded byte equals the
// planted one. Throws SimError(kInvalidArgument) when trials is 0.
Evaluation EvaluateGenome(const ExperimentConfig& config, const Genome& g,
                          int trials, std::uint64_t seed);

inline double Evaluate(const ExperimentConfig& config, const Genome& g,
                       int trials, std::uint64_t seed) {
  return EvaluateGenome(config, g, trials, seed).score;
}

struct FuzzOptions {
  int trials = 32;
  int restart_after = 200;  // non-improving iterations before a restart
  bool first_hit = false;
  int jobs = 1;
};

struct FuzzPositive {
  Genome genome;
  VariantLabel label = VariantLabel::kNoLeak;
  double score = 0.0;
  std::uint64_t found_at = 0;  // 1-based iteration
};

struct FuzzReport {
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;
  std::vector<FuzzPositive> positives;  // in discovery order
};

// Restart-augmented hill climbing over genomes. Each iteration evaluates one
// genome. Output depends only on (config, options minus jobs, max_iters,
// seed).
FuzzReport FuzzLoop(const ExperimentConfig& config, const FuzzOptions& options,
                    std::uint64_t max_iters, std::uint64_t seed);

std::string FuzzReportToJson(const FuzzReport& report, int indent = 2);

}  // namespace sbsim

#endif  // SBSIM_FUZZER_H_
