#include "sbsim/dsl.h"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>

namespace sbsim {

std::string_view ToString(FaultClass fault) {
  switch (fault) {
    case FaultClass::kNone: return "none";
    case FaultClass::kUS: return "us";
    case FaultClass::kPK: return "pk";
    case FaultClass::kNP: return "np";
  }
  return "?";
}

const SymbolDecl* AttackProgram::FindSymbol(std::string_view name) const {
  for (const auto& s : symbols) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

DslError::DslError(Kind kind, int line, const std::string& what)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what
                                  : what),
      kind_(kind),
      line_(line) {}

namespace {

using Kind = DslError::Kind;

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

bool IsIdentifier(std::string_view s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') {
    return false;
  }
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

std::optional<std::uint64_t> ParseImmediate(std::string_view s) {
  s = Trim(s);
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string Hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

class LineParser {
 public:
  LineParser(AttackProgram& program, int line)
      : program_(program), line_(line) {}

  [[noreturn]] void Fail(Kind kind, const std::string& what) const {
    throw DslError(kind, line_, what);
  }

  std::vector<std::string_view> Operands(std::string_view rest,
                                         std::size_t min_count,
                                         std::size_t max_count) const {
    std::vector<std::string_view> ops;
    rest = Trim(rest);
    if (!rest.empty()) {
      std::size_t start = 0;
      while (true) {
        const std::size_t comma = rest.find(',', start);
        ops.push_back(Trim(rest.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
    }
    if (ops.size() < min_count || ops.size() > max_count) {
      Fail(Kind::kSyntaxError, "wrong number of operands");
    }
    for (auto op : ops) {
      if (op.empty()) Fail(Kind::kSyntaxError, "empty operand");
    }
    return ops;
  }

  std::uint8_t Register(std::string_view s) const {
    const std::string_view digits = s.size() > 1 ? s.substr(1) : "";
    int idx = -1;
    if (s[0] == 'r' && (digits.size() == 1 ||
                        (digits.size() == 2 && digits[0] != '0'))) {
      std::from_chars(digits.data(), digits.data() + digits.size(), idx);
      for (char c : digits) {
        if (!std::isdigit(static_cast<unsigned char>(c))) idx = -1;
      }
    }
    if (idx < 0 || idx >= kNumRegs) {
      Fail(Kind::kSyntaxError, "bad register '" + std::string(s) + "'");
    }
    return static_cast<std::uint8_t>(idx);
  }

  std::uint32_t Size(std::string_view s) const {
    auto v = ParseImmediate(s);
    if (!v || *v < 1 || *v > 8) Fail(Kind::kSyntaxError, "size must be 1-8");
    return static_cast<std::uint32_t>(*v);
  }

  const SymbolDecl& Symbol(std::string_view name) const {
    if (!IsIdentifier(name)) {
      Fail(Kind::kSyntaxError, "bad symbol '" + std::string(name) + "'");
    }
    const SymbolDecl* decl = program_.FindSymbol(name);
    if (decl == nullptr) {
      Fail(Kind::kUnknownSymbol, "unknown symbol '" + std::string(name) + "'");
    }
    return *decl;
  }

  AddrExpr Address(std::string_view s) const {
    AddrExpr expr;
    std::string_view sym = s;
    if (auto plus = s.find('+'); plus != std::string_view::npos) {
      sym = Trim(s.substr(0, plus));
      auto off = ParseImmediate(s.substr(plus + 1));
      if (!off) Fail(Kind::kSyntaxError, "bad offset in '" + std::string(s) + "'");
      expr.offset = *off;
    }
    const SymbolDecl& decl = Symbol(sym);
    if (decl.kind != SymbolKind::kPage) {
      Fail(Kind::kSyntaxError, "'" + decl.name + "' is not a page symbol");
    }
    expr.symbol = decl.name;
    return expr;
  }

  void Declare(SymbolDecl decl) {
    if (!IsIdentifier(decl.name)) {
      Fail(Kind::kSyntaxError, "bad symbol '" + decl.name + "'");
    }
    if (program_.FindSymbol(decl.name) != nullptr) {
      Fail(Kind::kSyntaxError, "duplicate symbol '" + decl.name + "'");
    }
    program_.symbols.push_back(std::move(decl));
  }

  void Parse(std::string_view text) {
    text = Trim(text.substr(0, text.find('#')));
    if (text.empty()) return;
    std::size_t split = 0;
    while (split < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[split]))) {
      ++split;
    }
    const std::string_view op = text.substr(0, split);
    const std::string_view rest = text.substr(split);
    auto& out = program_.instrs;

    if (op == "page" || op == "probe") {
      auto ops = Operands(rest, 1, 1);
      Declare({std::string(ops[0]),
               op == "page" ? SymbolKind::kPage : SymbolKind::kProbe,
               FaultClass::kNone});
    } else if (op == "fault") {
      std::istringstream words{std::string(rest)};
      std::string name, cls, extra;
      words >> name >> cls;
      if (name.empty() || cls.empty() || (words >> extra)) {
        Fail(Kind::kSyntaxError, "expected 'fault <symbol> us|pk|np'");
      }
      FaultClass fault;
      if (cls == "us") fault = FaultClass::kUS;
      else if (cls == "pk") fault = FaultClass::kPK;
      else if (cls == "np") fault = FaultClass::kNP;
      else Fail(Kind::kSyntaxError, "unknown fault class '" + cls + "'");
      Declare({name, SymbolKind::kPage, fault});
    } else if (op == "policy") {
      auto ops = Operands(rest, 1, 1);
      if (ops[0] == "suppress") {
        program_.fault_policy = FaultPolicy::kSuppressAndContinue;
      } else if (ops[0] == "abort") {
        program_.fault_policy = FaultPolicy::kAbortTransaction;
      } else {
        Fail(Kind::kSyntaxError, "policy must be suppress or abort");
      }
    } else if (op == "set") {
      auto ops = Operands(rest, 2, 2);
      auto imm = ParseImmediate(ops[1]);
      if (!imm) Fail(Kind::kSyntaxError, "bad immediate");
      out.push_back(instr::SetReg{Register(ops[0]), *imm});
    } else if (op == "store") {
      auto ops = Operands(rest, 2, 3);
      instr::Store s{Address(ops[0]), Register(ops[1]), 8};
      if (ops.size() == 3) s.size = Size(ops[2]);
      out.push_back(std::move(s));
    } else if (op == "load") {
      auto ops = Operands(rest, 2, 3);
      instr::Load l{Register(ops[0]), Address(ops[1]), 1};
      if (ops.size() == 3) l.size = Size(ops[2]);
      out.push_back(std::move(l));
    } else if (op == "flush") {
      out.push_back(instr::Flush{Address(Operands(rest, 1, 1)[0])});
    } else if (op == "lockinc") {
      out.push_back(instr::LockInc{Address(Operands(rest, 1, 1)[0])});
    } else if (op == "fence") {
      Operands(rest, 0, 0);
      out.push_back(instr::Fence{});
    } else if (op == "encode") {
      auto ops = Operands(rest, 2, 2);
      const SymbolDecl& decl = Symbol(ops[0]);
      if (decl.kind != SymbolKind::kProbe) {
        Fail(Kind::kSyntaxError, "'" + decl.name + "' is not a probe symbol");
      }
      out.push_back(instr::Encode{decl.name, Register(ops[1])});
    } else {
      Fail(Kind::kSyntaxError, "unknown mnemonic '" + std::string(op) + "'");
    }
  }

 private:
  AttackProgram& program_;
  int line_;
};

// Semantic rules shared by the parser and ValidateProgram. lines[i] is the
// source line of instruction i, or empty for built programs.
void CheckSemantics(const AttackProgram& p, const std::vector<int>& lines) {
  auto line_of = [&](std::size_t i) {
    return i < lines.size() ? lines[i] : 0;
  };
  int faulting_loads = 0;
  std::set<int> loaded_regs;
  for (std::size_t i = 0; i < p.instrs.size(); ++i) {
    const Instr& in = p.instrs[i];
    if (const auto* load = std::get_if<instr::Load>(&in)) {
      const SymbolDecl* decl = p.FindSymbol(load->addr.symbol);
      if (decl != nullptr && decl->fault != FaultClass::kNone &&
          ++faulting_loads > 1) {
        throw DslError(Kind::kMultipleFaultingLoads, line_of(i),
                       "more than one load from a faulting page");
      }
      loaded_regs.insert(load->dest_reg);
    } else if (const auto* set = std::get_if<instr::SetReg>(&in)) {
      loaded_regs.erase(set->reg);
    } else if (const auto* enc = std::get_if<instr::Encode>(&in)) {
      if (!loaded_regs.contains(enc->index_reg)) {
        throw DslError(Kind::kInvalidEncode, line_of(i),
                       "encode register r" + std::to_string(enc->index_reg) +
                           " does not hold a loaded value");
      }
    }
  }
}

}  // namespace

AttackProgram ParseProgram(std::string_view text) {
  AttackProgram program;
  std::vector<int> lines;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const std::size_t before = program.instrs.size();
    LineParser(program, line_no).Parse(text.substr(pos, nl - pos));
    if (program.instrs.size() != before) lines.push_back(line_no);
    pos = nl + 1;
  }
  CheckSemantics(program, lines);
  return program;
}

void ValidateProgram(const AttackProgram& program) {
  std::set<std::string> seen;
  for (const auto& s : program.symbols) {
    if (!IsIdentifier(s.name) || !seen.insert(s.name).second) {
      throw DslError(Kind::kSyntaxError, 0, "bad or duplicate symbol " + s.name);
    }
  }
  auto check_page = [&](const AddrExpr& a) {
    const SymbolDecl* d = program.FindSymbol(a.symbol);
    if (d == nullptr) {
      throw DslError(Kind::kUnknownSymbol, 0, "unknown symbol '" + a.symbol + "'");
    }
    if (d->kind != SymbolKind::kPage) {
      throw DslError(Kind::kSyntaxError, 0, a.symbol + " is not a page symbol");
    }
  };
  auto check_reg = [](std::uint8_t r) {
    if (r >= kNumRegs) throw DslError(Kind::kSyntaxError, 0, "bad register");
  };
  auto check_size = [](std::uint32_t s) {
    if (s < 1 || s > 8) throw DslError(Kind::kSyntaxError, 0, "size must be 1-8");
  };
  for (const Instr& in : program.instrs) {
    std::visit(
        [&](const auto& i) {
          using T = std::decay_t<decltype(i)>;
          if constexpr (std::is_same_v<T, instr::SetReg>) {
            check_reg(i.reg);
          } else if constexpr (std::is_same_v<T, instr::Store>) {
            check_page(i.addr);
            check_reg(i.value_reg);
            check_size(i.size);
          } else if constexpr (std::is_same_v<T, instr::Load>) {
            check_page(i.addr);
            check_reg(i.dest_reg);
            check_size(i.size);
          } else if constexpr (std::is_same_v<T, instr::Flush> ||
                               std::is_same_v<T, instr::LockInc>) {
            check_page(i.addr);
          } else if constexpr (std::is_same_v<T, instr::Encode>) {
            const SymbolDecl* d = program.FindSymbol(i.probe);
            if (d == nullptr) {
              throw DslError(Kind::kUnknownSymbol, 0,
                             "unknown symbol '" + i.probe + "'");
            }
            if (d->kind != SymbolKind::kProbe) {
              throw DslError(Kind::kSyntaxError, 0,
                             i.probe + " is not a probe symbol");
            }
            check_reg(i.index_reg);
          }
        },
        in);
  }
  CheckSemantics(program, {});
}

namespace {

std::string FormatAddr(const AddrExpr& a) {
  return a.offset == 0 ? a.symbol : a.symbol + "+" + Hex(a.offset);
}

std::string Reg(std::uint8_t r) { return "r" + std::to_string(r); }

}  // namespace

std::string SerializeProgram(const AttackProgram& program) {
  std::string out;
  if (program.fault_policy == FaultPolicy::kAbortTransaction) {
    out += "policy abort\n";
  }
  for (const auto& s : program.symbols) {
    if (s.kind == SymbolKind::kProbe) {
      out += "probe " + s.name + "\n";
    } else if (s.fault == FaultClass::kNone) {
      out += "page " + s.name + "\n";
    } else {
      out += "fault " + s.name + " " + std::string(ToString(s.fault)) + "\n";
    }
  }
  for (const Instr& in : program.instrs) {
    std::visit(
        [&](const auto& i) {
          using T = std::decay_t<decltype(i)>;
          if constexpr (std::is_same_v<T, instr::SetReg>) {
            out += "set " + Reg(i.reg) + ", " + Hex(i.value);
          } else if constexpr (std::is_same_v<T, instr::Store>) {
            out += "store " + FormatAddr(i.addr) + ", " + Reg(i.value_reg) +
                   ", " + std::to_string(i.size);
          } else if constexpr (std::is_same_v<T, instr::Load>) {
            out += "load " + Reg(i.dest_reg) + ", " + FormatAddr(i.addr) +
                   ", " + std::to_string(i.size);
          } else if constexpr (std::is_same_v<T, instr::Flush>) {
            out += "flush " + FormatAddr(i.addr);
          } else if constexpr (std::is_same_v<T, instr::LockInc>) {
            out += "lockinc " + FormatAddr(i.addr);
          } else if constexpr (std::is_same_v<T, instr::Fence>) {
            out += "fence";
          } else if constexpr (std::is_same_v<T, instr::Encode>) {
            out += "encode " + i.probe + ", " + Reg(i.index_reg);
          }
          out += "\n";
        },
        in);
  }
  return out;
}

AttackProgram CanonicalMsbdsProgram(PrepOp prep, FaultClass fault) {
  AttackProgram p;
  p.symbols = {{"A", SymbolKind::kPage, FaultClass::kNone},
               {"B", SymbolKind::kPage, fault},
               {"P", SymbolKind::kProbe, FaultClass::kNone}};
  const AddrExpr store_addr{"A", kCanonicalOffset};
  p.instrs.push_back(instr::SetReg{1, 0});
  p.instrs.push_back(instr::Store{store_addr, 1, 8});
  if (prep == PrepOp::kClflush) p.instrs.push_back(instr::Flush{store_addr});
  if (prep == PrepOp::kLockInc) p.instrs.push_back(instr::LockInc{store_addr});
  p.instrs.push_back(instr::Load{2, AddrExpr{"B", kCanonicalOffset}, 1});
  p.instrs.push_back(instr::Encode{"P", 2});
  return p;
}

void PlantSecret(AttackProgram& program, std::uint8_t secret) {
  const instr::Store* store = nullptr;
  for (const auto& in : program.instrs) {
    if ((store = std::get_if<instr::Store>(&in)) != nullptr) break;
  }
  if (store == nullptr) return;
  const std::uint8_t reg = store->value_reg;
  for (auto& in : program.instrs) {
    if (auto* set = std::get_if<instr::SetReg>(&in); set && set->reg == reg) {
      set->value = secret;
    }
  }
}

}  // namespace sbsim
