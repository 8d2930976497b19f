#include "sbsim/dsl.h"

#include <gtest/gtest.h>

#include "program_gen.h"

namespace sbsim {
namespace {

constexpr const char* kHeader = "page A\nfault B us\nprobe P\n";

TEST(ParseProgram, StoreLine) {
  const auto p = ParseProgram(std::string(kHeader) + "store A+0x123, r1, 8\n");
  ASSERT_EQ(p.instrs.size(), 1u);
  EXPECT_EQ(p.instrs[0], Instr(instr::Store{AddrExpr{"A", 0x123}, 1, 8}));
}

TEST(ParseProgram, DefaultSizes) {
  const auto p = ParseProgram(std::string(kHeader) +
                              "store A+0x10, r3\nload r4, B+0x10\n");
  EXPECT_EQ(std::get<instr::Store>(p.instrs[0]).size, 8u);
  EXPECT_EQ(std::get<instr::Load>(p.instrs[1]).size, 1u);
}

TEST(ParseProgram, EmptyTextIsEmptyProgram) {
  EXPECT_EQ(ParseProgram(""), AttackProgram{});
  EXPECT_EQ(ParseProgram("# only a comment\n\n"), AttackProgram{});
}

TEST(ParseProgram, UnboundSymbolIsUnknownSymbol) {
  try {
    ParseProgram("load r2, Q\n");
    FAIL();
  } catch (const DslError& e) {
    EXPECT_EQ(e.kind(), DslError::Kind::kUnknownSymbol);
    EXPECT_EQ(e.line(), 1);
  }
}

TEST(ParseProgram, SyntaxErrorsCarryLineNumbers) {
  const char* bad[] = {
      "bogus r1\n",
      "set r16, 1\n",
      "set r01, 1\n",
      "store A+0x123, r1, 9\n",
      "store A+0x123, r1, 0\n",
      "store A+zz, r1\n",
      "fault C xx\n",
      "page A\n",  // duplicate
      "encode A, r1\n",
      "load r1, P\n",
  };
  for (const char* line : bad) {
    try {
      ParseProgram(std::string(kHeader) + line);
      ADD_FAILURE() << "accepted: " << line;
    } catch (const DslError& e) {
      EXPECT_EQ(e.kind(), DslError::Kind::kSyntaxError) << line;
      EXPECT_EQ(e.line(), 4) << line;
    }
  }
}

TEST(ParseProgram, SecondFaultingLoadRejected) {
  try {
    ParseProgram(std::string(kHeader) + "load r1, B+1\nload r2, B+2\n");
    FAIL();
  } catch (const DslError& e) {
    EXPECT_EQ(e.kind(), DslError::Kind::kMultipleFaultingLoads);
    EXPECT_EQ(e.line(), 5);
  }
}

TEST(ParseProgram, EncodeNeedsLoadedRegister) {
  try {
    ParseProgram(std::string(kHeader) + "set r2, 5\nencode P, r2\n");
    FAIL();
  } catch (const DslError& e) {
    EXPECT_EQ(e.kind(), DslError::Kind::kInvalidEncode);
  }
}

TEST(SerializeProgram, FenceLine) {
  AttackProgram p;
  p.instrs.push_back(instr::Fence{});
  EXPECT_EQ(SerializeProgram(p), "fence\n");
}

TEST(SerializeProgram, EmptyProgramIsEmptyText) {
  EXPECT_EQ(SerializeProgram(AttackProgram{}), "");
}

TEST(SerializeProgram, CanonicalText) {
  EXPECT_EQ(SerializeProgram(
                CanonicalMsbdsProgram(PrepOp::kLockInc, FaultClass::kUS)),
            "page A\n"
            "fault B us\n"
            "probe P\n"
            "set r1, 0x0\n"
            "store A+0x123, r1, 8\n"
            "lockinc A+0x123\n"
            "load r2, B+0x123, 1\n"
            "encode P, r2\n");
}

TEST(SerializeProgram, RoundTripsGeneratedPrograms) {
  Rng rng(99);
  for (int i = 0; i < 2000; ++i) {
    const AttackProgram p = testing::RandomProgram(rng);
    ASSERT_NO_THROW(ValidateProgram(p));
    const std::string text = SerializeProgram(p);
    ASSERT_EQ(ParseProgram(text), p) << text;
  }
}

TEST(CanonicalProgram, ShapeForEveryCombination) {
  for (auto prep : {PrepOp::kNone, PrepOp::kClflush, PrepOp::kLockInc}) {
    for (auto fault : {FaultClass::kUS, FaultClass::kPK, FaultClass::kNP}) {
      const AttackProgram p = CanonicalMsbdsProgram(prep, fault);
      SCOPED_TRACE(std::string(ToString(prep)) + "/" +
                   std::string(ToString(fault)));
      EXPECT_NO_THROW(ValidateProgram(p));
      EXPECT_EQ(p.FindSymbol("A")->fault, FaultClass::kNone);
      EXPECT_EQ(p.FindSymbol("B")->fault, fault);
      EXPECT_EQ(p.FindSymbol("P")->kind, SymbolKind::kProbe);
      const std::size_t expected_len = prep == PrepOp::kNone ? 4 : 5;
      ASSERT_EQ(p.instrs.size(), expected_len);
      const auto& store = std::get<instr::Store>(p.instrs[1]);
      const auto& load = std::get<instr::Load>(p.instrs[expected_len - 2]);
      EXPECT_EQ(store.addr.symbol, "A");
      EXPECT_EQ(load.addr.symbol, "B");
      EXPECT_EQ(store.addr.offset % 4096, load.addr.offset % 4096);
      EXPECT_EQ(std::holds_alternative<instr::LockInc>(p.instrs[2]),
                prep == PrepOp::kLockInc);
      EXPECT_EQ(std::holds_alternative<instr::Flush>(p.instrs[2]),
                prep == PrepOp::kClflush);
      EXPECT_EQ(std::get<instr::Encode>(p.instrs.back()).index_reg,
                load.dest_reg);
    }
  }
}

TEST(PlantSecret, RewritesStoredRegister) {
  AttackProgram p = CanonicalMsbdsProgram(PrepOp::kNone, FaultClass::kUS);
  PlantSecret(p, 0x41);
  EXPECT_EQ(std::get<instr::SetReg>(p.instrs[0]).value, 0x41u);
}

}  // namespace
}  // namespace sbsim
