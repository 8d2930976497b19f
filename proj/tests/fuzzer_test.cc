#include "sbsim/fuzzer.h"

#include <gtest/gtest.h>

#include <set>

#include "json.hpp"

namespace sbsim {
namespace {

ExperimentConfig Config(std::uint32_t revision) {
  ExperimentConfig c;
  c.profile = *FindBuiltinProfile(revision);
  return c;
}

int DifferingFields(const Genome& a, const Genome& b) {
  return (a.fault_class != b.fault_class) + (a.prep != b.prep) +
         (a.alias_mode != b.alias_mode) + (a.store_size != b.store_size) +
         (a.load_size != b.load_size) +
         (a.fence_before_load != b.fence_before_load);
}

TEST(Genome, IndexIsABijection) {
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < kGenomeSpaceSize; ++i) {
    const Genome g = GenomeFromIndex(i);
    EXPECT_EQ(GenomeIndex(g), i);
    EXPECT_GE(g.store_size, 1u);
    EXPECT_LE(g.store_size, 8u);
    EXPECT_GE(g.load_size, 1u);
    EXPECT_LE(g.load_size, 8u);
    seen.insert(i);
  }
  EXPECT_EQ(seen.size(), std::size_t{4 * 3 * 3 * 8 * 8 * 2});
}

TEST(MutateGenome, ChangesExactlyOneField) {
  Rng rng(8);
  for (int i = 0; i < 10000; ++i) {
    const Genome g = RandomGenome(rng);
    const Genome m = MutateGenome(g, rng);
    EXPECT_NE(m, g);
    EXPECT_EQ(DifferingFields(g, m), 1);
  }
}

TEST(MutateGenome, AliasModeOnlyMutationKeepsOtherFields) {
  Rng rng(1);
  const Genome g{FaultClass::kUS, PrepOp::kLockInc,
                 AliasMode::kCrossPageSameOffset, 8, 1, false};
  int seen = 0;
  for (int i = 0; i < 1000; ++i) {
    const Genome m = MutateGenome(g, rng);
    if (m.alias_mode == g.alias_mode) continue;
    ++seen;
    Genome restored = m;
    restored.alias_mode = g.alias_mode;
    EXPECT_EQ(restored, g);
  }
  EXPECT_GT(seen, 100);
}

TEST(RandomGenome, CoversEveryFaultClass) {
  Rng rng(2);
  std::set<FaultClass> faults;
  std::set<std::size_t> genomes;
  for (int i = 0; i < 10000; ++i) {
    const Genome g = RandomGenome(rng);
    faults.insert(g.fault_class);
    genomes.insert(GenomeIndex(g));
  }
  EXPECT_EQ(faults.size(), 4u);
  EXPECT_GT(genomes.size(), 1400u);
}

TEST(GenomeProgram, ValidForEveryGenome) {
  for (std::size_t i = 0; i < kGenomeSpaceSize; ++i) {
    const AttackProgram p = GenomeProgram(GenomeFromIndex(i));
    EXPECT_NO_THROW(ValidateProgram(p)) << SerializeProgram(p);
    EXPECT_EQ(ParseProgram(SerializeProgram(p)), p);
  }
}

TEST(Classify, Examples) {
  const Genome g;
  EXPECT_EQ(Classify(g, {AccessOutcome::kFaultUS, true}),
            VariantLabel::kMeltdownUS_SB);
  EXPECT_EQ(Classify(g, {AccessOutcome::kFaultPK, true}),
            VariantLabel::kMeltdownMPK_SB);
  EXPECT_EQ(Classify(g, {AccessOutcome::kFaultUS, false}),
            VariantLabel::kNoLeak);
  EXPECT_EQ(Classify(g, {AccessOutcome::kFaultNP, true}), VariantLabel::kNoLeak);
  EXPECT_EQ(Classify(g, {AccessOutcome::kOk, true}), VariantLabel::kNoLeak);
}

TEST(Evaluate, AliasedLockIncScoresHigh) {
  const Genome g{FaultClass::kUS, PrepOp::kLockInc,
                 AliasMode::kCrossPageSameOffset, 8, 1, false};
  const Evaluation e = EvaluateGenome(Config(0x48), g, 32, 5);
  EXPECT_GT(e.score, 0.9);
  EXPECT_EQ(e.label, VariantLabel::kMeltdownUS_SB);
}

TEST(Evaluate, NotPresentNeverScores) {
  for (auto prep : {PrepOp::kNone, PrepOp::kClflush, PrepOp::kLockInc}) {
    for (auto mode : {AliasMode::kSamePageSameOffset,
                      AliasMode::kCrossPageSameOffset,
                      AliasMode::kCrossPageDifferentOffset}) {
      const Genome g{FaultClass::kNP, prep, mode, 8, 1, false};
      EXPECT_EQ(Evaluate(Config(0x48), g, 32, 5), 0.0);
    }
  }
}

TEST(Evaluate, OffsetMismatchNeverScores) {
  const Genome g{FaultClass::kUS, PrepOp::kLockInc,
                 AliasMode::kCrossPageDifferentOffset, 8, 1, false};
  EXPECT_EQ(Evaluate(Config(0x48), g, 32, 5), 0.0);
}

TEST(Evaluate, DeterministicAndRejectsZeroTrials) {
  const Genome g{FaultClass::kPK, PrepOp::kClflush,
                 AliasMode::kSamePageSameOffset, 4, 2, false};
  EXPECT_EQ(Evaluate(Config(0x48), g, 16, 3), Evaluate(Config(0x48), g, 16, 3));
  EXPECT_THROW(Evaluate(Config(0x48), g, 0, 3), SimError);
}

TEST(FuzzLoop, FindsUSVariantOnVulnerableProfile) {
  const FuzzReport r = FuzzLoop(Config(0x48), {}, 10000, 0);
  EXPECT_EQ(r.iterations, 10000u);
  bool us = false;
  for (const auto& p : r.positives) {
    us |= p.label == VariantLabel::kMeltdownUS_SB;
    EXPECT_LE(p.found_at, 10000u);
    EXPECT_GT(p.score, 0.0);
    EXPECT_TRUE(p.genome.fault_class == FaultClass::kUS ||
                p.genome.fault_class == FaultClass::kPK);
  }
  EXPECT_TRUE(us);
}

TEST(FuzzLoop, MitigatedProfileHasNoPositives) {
  const FuzzReport r = FuzzLoop(Config(0x86), {}, 2000, 0);
  EXPECT_TRUE(r.positives.empty());
}

TEST(FuzzLoop, SingleIteration) {
  const FuzzReport r = FuzzLoop(Config(0x48), {}, 1, 4);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_LE(r.positives.size(), 1u);
}

TEST(FuzzLoop, FirstHitStopsEarly) {
  FuzzOptions o;
  o.first_hit = true;
  const FuzzReport r = FuzzLoop(Config(0x48), o, 10000, 0);
  ASSERT_FALSE(r.positives.empty());
  EXPECT_EQ(r.iterations, r.positives.back().found_at);
}

TEST(FuzzLoop, ParallelMatchesSerial) {
  FuzzOptions serial, parallel;
  parallel.jobs = 3;
  EXPECT_EQ(FuzzReportToJson(FuzzLoop(Config(0x50), serial, 3000, 11)),
            FuzzReportToJson(FuzzLoop(Config(0x50), parallel, 3000, 11)));
}

TEST(FuzzReportToJson, Schema) {
  FuzzReport r;
  r.seed = 7;
  r.iterations = 12;
  r.positives.push_back({Genome{FaultClass::kPK, PrepOp::kClflush,
                                AliasMode::kCrossPageSameOffset, 8, 1, true},
                         VariantLabel::kMeltdownMPK_SB, 0.5, 3});
  const auto j = nlohmann::json::parse(FuzzReportToJson(r));
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["iterations"], 12);
  ASSERT_EQ(j["positives"].size(), 1u);
  const auto& p = j["positives"][0];
  EXPECT_EQ(p["label"], "MeltdownMPK_SB");
  EXPECT_EQ(p["score"], 0.5);
  EXPECT_EQ(p["found_at"], 3);
  EXPECT_EQ(p["genome"]["fault_class"], "pk");
  EXPECT_EQ(p["genome"]["prep"], "clflush");
  EXPECT_EQ(p["genome"]["fence_before_load"], true);
}

}  // namespace
}  // namespace sbsim
