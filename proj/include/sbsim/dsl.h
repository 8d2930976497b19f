#ifndef SBSIM_DSL_H_
#define SBSIM_DSL_H_

// Line-oriented attack language (.sbl files).
//
//   # comment
//   policy suppress|abort          fault policy, default suppress
//   page A                         ordinary user page
//   fault B us|pk|np               page mapped to raise that fault on loads
//   probe P                        256-slot Flush+Reload array
//   set r1, 0x41
//   store A+0x123, r1, 8           size defaults to 8
//   flush A+0x123
//   lockinc A+0x123
//   fence
//   load r2, B+0x123, 1            size defaults to 1
//   encode P, r2                   touches P + (r2 & 0xff) * stride
//
// Symbols must be declared before they are used. Registers are r0-r15.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sbsim/machine.h"

namespace sbsim {

inline constexpr int kNumRegs = 16;

struct AddrExpr {
  std::string symbol;
  std::uint64_t offset = 0;
  friend bool operator==(const AddrExpr&, const AddrExpr&) = default;
};

namespace instr {

struct SetReg {
  std::uint8_t reg = 0;
  std::uint64_t value = 0;
  friend bool operator==(const SetReg&, const SetReg&) = default;
};
struct Store {
  AddrExpr addr;
  std::uint8_t value_reg = 0;
  std::uint32_t size = 8;
  friend bool operator==(const Store&, const Store&) = default;
};
struct Load {
  std::uint8_t dest_reg = 0;
  AddrExpr addr;
  std::uint32_t size = 1;
  friend bool operator==(const Load&, const Load&) = default;
};
struct Flush {
  AddrExpr addr;
  friend bool operator==(const Flush&, const Flush&) = default;
};
struct LockInc {
  AddrExpr addr;
  friend bool operator==(const LockInc&, const LockInc&) = default;
};
struct Fence {
  friend bool operator==(const Fence&, const Fence&) = default;
};
struct Encode {
  std::string probe;
  std::uint8_t index_reg = 0;
  friend bool operator==(const Encode&, const Encode&) = default;
};

}  // namespace instr

using Instr = std::variant<instr::SetReg, instr::Store, instr::Load,
                           instr::Flush, instr::LockInc, instr::Fence,
                           instr::Encode>;

// Fault raised by user loads from a page. kNone means an ordinary page.
enum class FaultClass { kNone, kUS, kPK, kNP };

std::string_view ToString(FaultClass fault);

enum class SymbolKind { kPage, kProbe };

struct SymbolDecl {
  std::string name;
  SymbolKind kind = SymbolKind::kPage;
  FaultClass fault = FaultClass::kNone;  // pages only
  friend bool operator==(const SymbolDecl&, const SymbolDecl&) = default;
};

enum class FaultPolicy { kSuppressAndContinue, kAbortTransaction };

struct AttackProgram {
  std::vector<SymbolDecl> symbols;
  std::vector<Instr> instrs;
  FaultPolicy fault_policy = FaultPolicy::kSuppressAndContinue;

  const SymbolDecl* FindSymbol(std::string_view name) const;

  friend bool operator==(const AttackProgram&, const AttackProgram&) = default;
};

class DslError : public std::runtime_error {
 public:
  enum class Kind {
    kSyntaxError,
    kUnknownSymbol,
    kMultipleFaultingLoads,
    kInvalidEncode,
  };

  // line is 1-based; 0 when the error is not tied to a source line.
  DslError(Kind kind, int line, const std::string& what);

  Kind kind() const { return kind_; }
  int line() const { return line_; }

 private:
  Kind kind_;
  int line_;
};

// Throws DslError.
AttackProgram ParseProgram(std::string_view text);
std::string SerializeProgram(const AttackProgram& program);

// Checks the structural rules ParseProgram enforces. Throws DslError.
void ValidateProgram(const AttackProgram& program);

// Store page A, faulting page B, probe P. The secret travels in r1, the
// transient load lands in r2, both at page offset kCanonicalOffset.
inline constexpr std::uint64_t kCanonicalOffset = 0x123;

// SetReg(secret) -> Store A+X -> [prep on A+X] -> Load B+X -> Encode(P).
AttackProgram CanonicalMsbdsProgram(PrepOp prep, FaultClass fault);

// Rewrites the immediate of every SetReg feeding the first store's value
// register so that the planted byte is `secret`.
void PlantSecret(AttackProgram& program, std::uint8_t secret);

}  // namespace sbsim

#endif  // SBSIM_DSL_H_
