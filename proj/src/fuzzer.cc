#include "sbsim/fuzzer.h"

#include <atomic>
#include <thread>

#include "json.hpp"

namespace sbsim {

namespace {

constexpr std::array kFaultClasses = {FaultClass::kUS, FaultClass::kPK,
                                      FaultClass::kNP, FaultClass::kNone};
constexpr std::array kPreps = {PrepOp::kNone, PrepOp::kClflush,
                               PrepOp::kLockInc};
constexpr std::array kAliasModes = {AliasMode::kSamePageSameOffset,
                                    AliasMode::kCrossPageSameOffset,
                                    AliasMode::kCrossPageDifferentOffset};

constexpr std::uint64_t kStoreOffset = kCanonicalOffset;
constexpr std::uint64_t kOtherOffset = 0x2a0;

template <typename T, std::size_t N>
std::size_t IndexOf(const std::array<T, N>& values, T v) {
  for (std::size_t i = 0; i < N; ++i) {
    if (values[i] == v) return i;
  }
  return 0;
}

// Picks a value in [0, n) other than `current`.
std::size_t OtherValue(std::size_t current, std::size_t n, Rng& rng) {
  const std::size_t pick = rng.UniformInt(n - 1);
  return pick >= current ? pick + 1 : pick;
}

}  // namespace

std::string_view ToString(AliasMode mode) {
  switch (mode) {
    case AliasMode::kSamePageSameOffset: return "SamePageSameOffset";
    case AliasMode::kCrossPageSameOffset: return "CrossPageSameOffset";
    case AliasMode::kCrossPageDifferentOffset: return "CrossPageDifferentOffset";
  }
  return "?";
}

std::string_view ToString(VariantLabel label) {
  switch (label) {
    case VariantLabel::kMeltdownUS_SB: return "MeltdownUS_SB";
    case VariantLabel::kMeltdownMPK_SB: return "MeltdownMPK_SB";
    case VariantLabel::kNoLeak: return "NoLeak";
  }
  return "?";
}

std::size_t GenomeIndex(const Genome& g) {
  std::size_t i = IndexOf(kFaultClasses, g.fault_class);
  i = i * 3 + IndexOf(kPreps, g.prep);
  i = i * 3 + IndexOf(kAliasModes, g.alias_mode);
  i = i * 8 + (g.store_size - 1);
  i = i * 8 + (g.load_size - 1);
  i = i * 2 + (g.fence_before_load ? 1 : 0);
  return i;
}

Genome GenomeFromIndex(std::size_t i) {
  Genome g;
  g.fence_before_load = i % 2 == 1;
  i /= 2;
  g.load_size = static_cast<std::uint32_t>(i % 8) + 1;
  i /= 8;
  g.store_size = static_cast<std::uint32_t>(i % 8) + 1;
  i /= 8;
  g.alias_mode = kAliasModes[i % 3];
  i /= 3;
  g.prep = kPreps[i % 3];
  i /= 3;
  g.fault_class = kFaultClasses[i % 4];
  return g;
}

Genome RandomGenome(Rng& rng) {
  return GenomeFromIndex(rng.UniformInt(kGenomeSpaceSize));
}

Genome MutateGenome(const Genome& g, Rng& rng) {
  Genome out = g;
  switch (rng.UniformInt(6)) {
    case 0:
      out.fault_class = kFaultClasses[OtherValue(
          IndexOf(kFaultClasses, g.fault_class), kFaultClasses.size(), rng)];
      break;
    case 1:
      out.prep =
          kPreps[OtherValue(IndexOf(kPreps, g.prep), kPreps.size(), rng)];
      break;
    case 2:
      out.alias_mode = kAliasModes[OtherValue(
          IndexOf(kAliasModes, g.alias_mode), kAliasModes.size(), rng)];
      break;
    case 3:
      out.store_size =
          static_cast<std::uint32_t>(OtherValue(g.store_size - 1, 8, rng)) + 1;
      break;
    case 4:
      out.load_size =
          static_cast<std::uint32_t>(OtherValue(g.load_size - 1, 8, rng)) + 1;
      break;
    default:
      out.fence_before_load = !g.fence_before_load;
      break;
  }
  return out;
}

AttackProgram GenomeProgram(const Genome& g) {
  AttackProgram p;
  const bool same_page = g.alias_mode == AliasMode::kSamePageSameOffset;
  if (same_page) {
    p.symbols.push_back({"A", SymbolKind::kPage, g.fault_class});
  } else {
    p.symbols.push_back({"A", SymbolKind::kPage, FaultClass::kNone});
    p.symbols.push_back({"B", SymbolKind::kPage, g.fault_class});
  }
  p.symbols.push_back({"P", SymbolKind::kProbe, FaultClass::kNone});

  const AddrExpr store_addr{"A", kStoreOffset};
  AddrExpr load_addr{same_page ? "A" : "B", kStoreOffset};
  if (g.alias_mode == AliasMode::kCrossPageDifferentOffset) {
    load_addr.offset = kOtherOffset;
  }

  p.instrs.push_back(instr::SetReg{1, 0});
  p.instrs.push_back(instr::Store{store_addr, 1, g.store_size});
  if (g.prep == PrepOp::kClflush) p.instrs.push_back(instr::Flush{store_addr});
  if (g.prep == PrepOp::kLockInc) p.instrs.push_back(instr::LockInc{store_addr});
  if (g.fence_before_load) p.instrs.push_back(instr::Fence{});
  p.instrs.push_back(instr::Load{2, load_addr, g.load_size});
  p.instrs.push_back(instr::Encode{"P", 2});
  return p;
}

VariantLabel Classify(const Genome& /*genome*/, const Evidence& evidence) {
  if (!evidence.bytes_match) return VariantLabel::kNoLeak;
  switch (evidence.fault) {
    case AccessOutcome::kFaultUS: return VariantLabel::kMeltdownUS_SB;
    case AccessOutcome::kFaultPK: return VariantLabel::kMeltdownMPK_SB;
    default: return VariantLabel::kNoLeak;
  }
}

Evaluation EvaluateGenome(const ExperimentConfig& config, const Genome& g,
                          int trials, std::uint64_t seed) {
  if (trials <= 0) {
    throw SimError(SimError::Kind::kInvalidArgument, "trials must be > 0");
  }
  const AttackProgram base = GenomeProgram(g);
  AttackHarness harness(config, base, seed);
  Rng bytes(DeriveSeed(seed, Stream::kTrialByte));

  Evaluation eval;
  int leaks = 0;
  for (int t = 0; t < trials; ++t) {
    const auto planted = static_cast<std::uint8_t>(bytes.Next() & 0xff);
    AttackProgram program = base;
    PlantSecret(program, planted);
    const auto trial = harness.Run(program);
    const bool faulted = trial.attempt.fault != AccessOutcome::kOk;
    const bool match = trial.decoded.value == planted && !trial.decoded.ambiguous;
    eval.evidence.fault = trial.attempt.fault;
    if (faulted && match) {
      ++leaks;
      eval.evidence.bytes_match = true;
    }
  }
  eval.score = static_cast<double>(leaks) / trials;
  eval.label = Classify(g, eval.evidence);
  return eval;
}

FuzzReport FuzzLoop(const ExperimentConfig& config, const FuzzOptions& options,
                    std::uint64_t max_iters, std::uint64_t seed) {
  FuzzReport report;
  report.seed = seed;
  if (max_iters == 0) return report;

  // Scores are a pure function of (seed, genome), so they can be memoized
  // and, with jobs > 1, computed ahead of the walk in any order.
  std::vector<std::optional<Evaluation>> cache(kGenomeSpaceSize);
  auto eval_index = [&](std::size_t idx) {
    return EvaluateGenome(config, GenomeFromIndex(idx), options.trials,
                          DeriveSeed(seed, Stream::kFuzzEval, idx));
  };
  if (options.jobs > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (int w = 0; w < options.jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < kGenomeSpaceSize; i = next++) {
          cache[i] = eval_index(i);
        }
      });
    }
  }

  std::vector<bool> reported(kGenomeSpaceSize, false);
  bool hit = false;
  auto visit = [&](const Genome& g, std::uint64_t iteration) {
    const std::size_t idx = GenomeIndex(g);
    if (!cache[idx]) cache[idx] = eval_index(idx);
    const Evaluation& e = *cache[idx];
    if (e.score > 0.0 && !reported[idx]) {
      reported[idx] = true;
      report.positives.push_back({g, e.label, e.score, iteration});
      if (e.label != VariantLabel::kNoLeak) hit = true;
    }
    return e.score;
  };

  Rng first(DeriveSeed(seed, Stream::kFuzzStep, 0));
  Genome current = RandomGenome(first);
  double current_score = visit(current, 1);
  report.iterations = 1;
  int stale = 0;

  for (std::uint64_t i = 1; i < max_iters; ++i) {
    if (options.first_hit && hit) break;
    Rng rng(DeriveSeed(seed, Stream::kFuzzStep, i));
    if (stale >= options.restart_after) {
      current = RandomGenome(rng);
      current_score = visit(current, i + 1);
      stale = 0;
    } else {
      const Genome candidate = MutateGenome(current, rng);
      const double score = visit(candidate, i + 1);
      if (score > current_score) {
        stale = 0;
      } else {
        ++stale;
      }
      if (score >= current_score) {
        current = candidate;
        current_score = score;
      }
    }
    report.iterations = i + 1;
  }
  return report;
}

std::string FuzzReportToJson(const FuzzReport& report, int indent) {
  nlohmann::ordered_json j;
  j["seed"] = report.seed;
  j["iterations"] = report.iterations;
  j["positives"] = nlohmann::ordered_json::array();
  for (const auto& p : report.positives) {
    nlohmann::ordered_json genome;
    genome["fault_class"] = ToString(p.genome.fault_class);
    genome["prep"] = ToString(p.genome.prep);
    genome["alias_mode"] = ToString(p.genome.alias_mode);
    genome["store_size"] = p.genome.store_size;
    genome["load_size"] = p.genome.load_size;
    genome["fence_before_load"] = p.genome.fence_before_load;
    nlohmann::ordered_json entry;
    entry["genome"] = std::move(genome);
    entry["label"] = ToString(p.label);
    entry["score"] = p.score;
    entry["found_at"] = p.found_at;
    j["positives"].push_back(std::move(entry));
  }
  return j.dump(indent);
}

}  // namespace sbsim
