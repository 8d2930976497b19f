#include "sbsim/engine.h"

#include <algorithm>
#include <array>
#include <map>

namespace sbsim {

namespace {

constexpr Address kPageRegion = 0x10000;
constexpr Address kProbeRegion = 0x10000000;

std::uint64_t LittleEndian(std::span<const std::uint8_t> bytes) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  }
  return v;
}

std::vector<std::uint8_t> Bytes(std::uint64_t v, std::uint32_t size) {
  std::vector<std::uint8_t> out(size);
  for (std::uint32_t i = 0; i < size; ++i) out[i] = (v >> (8 * i)) & 0xff;
  return out;
}

// Prep op seen by each store: the first flush or lockinc on the store's line
// before the next load or the next store to that line.
std::vector<PrepOp> StorePreps(const MachineState& m, const AttackProgram& p) {
  std::vector<PrepOp> preps(p.instrs.size(), PrepOp::kNone);
  auto line_of = [&](const AddrExpr& a) {
    return LineBase(m.Resolve(a.symbol) + a.offset);
  };
  for (std::size_t i = 0; i < p.instrs.size(); ++i) {
    const auto* store = std::get_if<instr::Store>(&p.instrs[i]);
    if (store == nullptr) continue;
    const Address line = line_of(store->addr);
    for (std::size_t j = i + 1; j < p.instrs.size(); ++j) {
      const Instr& next = p.instrs[j];
      if (std::holds_alternative<instr::Load>(next)) break;
      if (const auto* s = std::get_if<instr::Store>(&next)) {
        if (line_of(s->addr) == line) break;
      } else if (const auto* f = std::get_if<instr::Flush>(&next)) {
        if (line_of(f->addr) == line) {
          preps[i] = PrepOp::kClflush;
          break;
        }
      } else if (const auto* l = std::get_if<instr::LockInc>(&next)) {
        if (line_of(l->addr) == line) {
          preps[i] = PrepOp::kLockInc;
          break;
        }
      }
    }
  }
  return preps;
}

}  // namespace

bool ForwardDecision(AccessOutcome fault, bool alias_hit, bool mitigated,
                     Cycle load_time,
                     const std::optional<StoreBufferEntry>& entry) {
  return IsForwardingFault(fault) && alias_hit && !mitigated &&
         entry.has_value() && entry->LiveAt(load_time);
}

PageMapping MappingFor(Address vaddr, FaultClass fault) {
  PageMapping m;
  m.vaddr = vaddr;
  switch (fault) {
    case FaultClass::kNone: break;
    case FaultClass::kUS: m.user_accessible = false; break;
    case FaultClass::kPK:
      m.protection_key = 1;
      m.key_denied = true;
      break;
    case FaultClass::kNP: m.present = false; break;
  }
  return m;
}

void MapProgramSymbols(MachineState& machine, const AttackProgram& program) {
  const Address probe_span =
      std::max<Address>(kPageSize, kProbeSlots * machine.probe_stride);
  Address next_page = kPageRegion;
  Address next_probe = kProbeRegion;
  for (const auto& sym : program.symbols) {
    if (sym.kind == SymbolKind::kPage) {
      machine.pages.Map(MappingFor(next_page, sym.fault));
      machine.Bind(sym.name, next_page);
      next_page += kPageRegion;
    } else {
      for (Address a = next_probe; a < next_probe + probe_span; a += kPageSize) {
        machine.pages.Map(MappingFor(a, FaultClass::kNone));
      }
      machine.Bind(sym.name, next_probe);
      next_probe += (probe_span + kPageRegion - 1) / kPageRegion * kPageRegion;
    }
  }
}

AttemptResult RunAttempt(MachineState& m, const AttackProgram& p,
                         Cycle probe_jitter) {
  const TimingModel& tm = m.timing;
  const std::vector<PrepOp> preps = StorePreps(m, p);
  auto resolve = [&](const AddrExpr& a) {
    return m.Resolve(a.symbol) + a.offset;
  };
  auto& regs = m.arch.regs;

  AttemptResult result;
  const Cycle start = m.now;
  bool transient = false;
  bool stop = false;
  Cycle fault_at = 0;
  std::array<std::uint64_t, kNumRegs> saved_regs{};

  for (std::size_t i = 0; i < p.instrs.size() && !stop; ++i) {
    if (transient && m.now >= fault_at + tm.transient_window) break;
    std::visit(
        [&](const auto& in) {
          using T = std::decay_t<decltype(in)>;
          if constexpr (std::is_same_v<T, instr::SetReg>) {
            regs[in.reg] = in.value;
            m.now += 1;
          } else if constexpr (std::is_same_v<T, instr::Store>) {
            if (transient) return;  // never retires
            const Address a = resolve(in.addr);
            const auto bytes = Bytes(regs[in.value_reg], in.size);
            m.store_buffer.Insert(a, bytes, m.now, m.cache.State(a), preps[i],
                                  tm);
            m.WriteMemory(a, bytes);
            m.cache.Touch(a, AccessKind::kWrite);
            m.now += 1;
          } else if constexpr (std::is_same_v<T, instr::Flush>) {
            if (transient) return;
            m.cache.Flush(resolve(in.addr));
            m.now += 1;
          } else if constexpr (std::is_same_v<T, instr::LockInc>) {
            if (transient) return;
            const Address a = resolve(in.addr);
            const auto bytes = Bytes(m.ReadMemory(a, 4) + 1, 4);
            m.WriteMemory(a, bytes);
            m.cache.Touch(a, AccessKind::kWrite);
            m.now += 1;
          } else if constexpr (std::is_same_v<T, instr::Fence>) {
            if (transient) return;
            m.now = m.store_buffer.DrainedAt(m.now) + 1;
            m.store_buffer.Retire(m.now);
          } else if constexpr (std::is_same_v<T, instr::Load>) {
            const Address a = resolve(in.addr);
            const AccessOutcome outcome = ClassifyAccess(m.pages, a, true);
            if (outcome == AccessOutcome::kOk) {
              regs[in.dest_reg] = m.ReadMemory(a, in.size);
              m.now += m.cache.IsCached(a) ? tm.hit_latency : tm.miss_latency;
              m.cache.Touch(a, AccessKind::kRead);
              return;
            }
            if (transient) {
              stop = true;
              return;
            }
            result.fault = outcome;
            saved_regs = regs;
            transient = true;
            const Cycle lookup = m.now + tm.load_lookup_delay + probe_jitter;
            fault_at = lookup;
            m.now = lookup;
            const auto entry =
                m.store_buffer.LookupAlias(PageOffset(a), in.size, lookup);
            if (!ForwardDecision(outcome, entry.has_value(),
                                 m.microcode.forwarding_mitigated, lookup,
                                 entry)) {
              stop = true;
              return;
            }
            const std::uint32_t skip = PageOffset(a) - entry->page_offset;
            regs[in.dest_reg] = LittleEndian(
                std::span(entry->data).subspan(skip, in.size));
            result.forwarded = true;
            m.now += 1;
          } else if constexpr (std::is_same_v<T, instr::Encode>) {
            const auto slot = static_cast<std::uint8_t>(regs[in.index_reg]);
            const Address a = m.Resolve(in.probe) + slot * m.probe_stride;
            if (transient) {
              result.transient_touches.insert(slot);
              m.cache.Touch(a, AccessKind::kRead);
              m.now += 1;
            } else {
              m.now += m.cache.IsCached(a) ? tm.hit_latency : tm.miss_latency;
              m.cache.Touch(a, AccessKind::kRead);
            }
          }
        },
        p.instrs[i]);
  }

  if (transient) {
    regs = saved_regs;
    m.now = std::max(m.now, fault_at + tm.transient_window);
  }
  m.store_buffer.Retire(m.now);
  result.cycles_consumed = m.now - start;
  return result;
}

namespace {

Address MapAndFindProbe(MachineState& machine, const AttackProgram& program) {
  MapProgramSymbols(machine, program);
  for (const auto& sym : program.symbols) {
    if (sym.kind == SymbolKind::kProbe) return machine.Resolve(sym.name);
  }
  throw SimError(SimError::Kind::kInvalidArgument,
                 "program declares no probe symbol");
}

MachineState MakeMachine(const ExperimentConfig& config) {
  config.timing.Validate();
  MachineState m(config.timing, config.profile);
  m.probe_stride = config.probe_stride;
  return m;
}

}  // namespace

AttackHarness::AttackHarness(const ExperimentConfig& config,
                             const AttackProgram& program, std::uint64_t seed)
    : machine_(MakeMachine(config)),
      probe_(MapAndFindProbe(machine_, program), config.probe_stride),
      oracle_(config.oracle, DeriveSeed(seed, Stream::kOracleNoise)),
      jitter_rng_(DeriveSeed(seed, Stream::kJitter)) {
  TimingOracle calibration(config.oracle,
                           DeriveSeed(seed, Stream::kCalibration));
  threshold_ = CalibrateFromOracle(calibration);
}

AttackHarness::Trial AttackHarness::Run(const AttackProgram& program) {
  MachineState& m = machine_;
  const TimingModel& tm = m.timing;

  probe_.FlushAll(m.cache);
  m.now += kProbeSlots;
  // The attack loop keeps rewriting its store target, so it stays cached
  // unless the program itself evicts it.
  for (const auto& in : program.instrs) {
    if (const auto* s = std::get_if<instr::Store>(&in)) {
      m.cache.Touch(m.Resolve(s->addr.symbol) + s->addr.offset,
                    AccessKind::kWrite);
    }
  }
  m.now += tm.hit_latency;

  Trial trial;
  trial.attempt =
      RunAttempt(m, program, jitter_rng_.UniformInt(tm.issue_jitter));

  const Latencies latencies = MeasureReload(probe_, m.cache, oracle_);
  for (int i = 0; i < kProbeSlots; ++i) {
    m.now += m.cache.IsCached(probe_.SlotAddress(i)) ? tm.hit_latency
                                                     : tm.miss_latency;
  }
  trial.decoded = DecodeByte(latencies, threshold_);
  return trial;
}

LeakageReport RunExperiment(const ExperimentConfig& config,
                            const AttackProgram& program_template,
                            std::span<const std::uint8_t> secret, Cycle budget,
                            std::uint64_t seed) {
  LeakageReport report;
  report.secret_len = secret.size();
  AttackHarness harness(config, program_template, seed);
  const Cycle start = harness.machine().now;
  const int needed = std::max(1, config.confirmations);

  std::array<std::optional<AttackProgram>, 256> planted;
  auto program_for = [&](std::uint8_t byte) -> const AttackProgram& {
    if (!planted[byte]) {
      planted[byte] = program_template;
      PlantSecret(*planted[byte], byte);
    }
    return *planted[byte];
  };

  struct Position {
    std::map<std::uint8_t, int> votes;
    int decodes = 0;
    std::optional<std::uint8_t> value;
  };
  std::vector<Position> positions(secret.size());
  std::size_t remaining = secret.size();
  std::size_t cursor = 0;

  while (remaining > 0 && harness.machine().now - start < budget) {
    while (positions[cursor].value) cursor = (cursor + 1) % secret.size();
    Position& pos = positions[cursor];

    const auto trial = harness.Run(program_for(secret[cursor]));
    ++report.attempts;
    if (trial.attempt.forwarded) ++report.forwarded_attempts;
    if (trial.decoded.value && !trial.decoded.ambiguous) {
      ++pos.decodes;
      if (++pos.votes[*trial.decoded.value] >= needed) {
        pos.value = trial.decoded.value;
        --remaining;
      }
    }
    cursor = (cursor + 1) % secret.size();
  }

  report.sim_cycles = harness.machine().now - start;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Position& pos = positions[i];
    if (!pos.value) continue;
    RecoveredByte rb;
    rb.position = i;
    rb.value = *pos.value;
    rb.confidence =
        static_cast<double>(pos.votes.at(*pos.value)) / pos.decodes;
    report.recovered.push_back(rb);
    if (rb.value == secret[i]) ++report.correct;
  }
  if (report.sim_cycles > 0) {
    report.rate = static_cast<double>(report.correct) *
                  static_cast<double>(config.timing.nominal_frequency) /
                  static_cast<double>(report.sim_cycles);
  }
  return report;
}

std::vector<std::uint8_t> GenerateSecret(std::size_t length,
                                         std::uint64_t seed) {
  Rng rng(DeriveSeed(seed, Stream::kSecret));
  std::vector<std::uint8_t> out(length);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng.Next() & 0xff);
  return out;
}

}  // namespace sbsim
