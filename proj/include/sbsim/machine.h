#ifndef SBSIM_MACHINE_H_
#define SBSIM_MACHINE_H_

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sbsim {

using Address = std::uint64_t;
using Cycle = std::uint64_t;

inline constexpr Address kPageSize = 4096;
inline constexpr Address kLineSize = 64;

constexpr Address PageBase(Address a) { return a & ~(kPageSize - 1); }
constexpr std::uint32_t PageOffset(Address a) {
  return static_cast<std::uint32_t>(a & (kPageSize - 1));
}
constexpr Address LineBase(Address a) { return a & ~(kLineSize - 1); }

class SimError : public std::runtime_error {
 public:
  enum class Kind {
    kStoreSplitUnsupported,
    kUnboundSymbol,
    kInvalidMapping,
    kInvalidTiming,
    kInvalidArgument,
  };

  SimError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// ---------------------------------------------------------------------------
// Paging

struct PageMapping {
  Address vaddr = 0;
  bool present = true;
  bool user_accessible = true;  // US bit
  std::uint8_t protection_key = 0;
  bool key_denied = false;  // PKRU access-disable for protection_key
};

class PageTable {
 public:
  // Throws SimError(kInvalidMapping) on an unaligned vaddr or a key > 15.
  void Map(const PageMapping& mapping);
  void Unmap(Address vaddr);
  const PageMapping* Find(Address vaddr) const;

 private:
  std::unordered_map<Address, PageMapping> pages_;
};

enum class AccessOutcome { kOk, kFaultUS, kFaultPK, kFaultNP };

std::string_view ToString(AccessOutcome outcome);

// Precedence is NP > US > PK.
AccessOutcome ClassifyAccess(const PageTable& table, Address vaddr,
                             bool from_user);

constexpr bool IsForwardingFault(AccessOutcome outcome) {
  return outcome == AccessOutcome::kFaultUS ||
         outcome == AccessOutcome::kFaultPK;
}

// ---------------------------------------------------------------------------
// Cache: flat per-line state map, no sets or eviction.

enum class CacheLineState { kInvalid, kShared, kExclusive, kModified };
enum class AccessKind { kRead, kWrite };

std::string_view ToString(CacheLineState state);

class Cache {
 public:
  void Flush(Address addr);
  void Touch(Address addr, AccessKind kind);
  CacheLineState State(Address addr) const;
  bool IsCached(Address addr) const {
    return State(addr) != CacheLineState::kInvalid;
  }
  std::size_t tracked_lines() const { return lines_.size(); }

 private:
  std::unordered_map<Address, CacheLineState> lines_;
};

// ---------------------------------------------------------------------------
// Timing

enum class PrepOp { kNone, kClflush, kLockInc };

std::string_view ToString(PrepOp prep);
std::optional<PrepOp> ParsePrepOp(std::string_view text);

struct TimingModel {
  Cycle hit_latency = 40;
  Cycle miss_latency = 300;
  Cycle drain_cached = 5;
  Cycle drain_flushed = 200;
  Cycle drain_locked = 300;
  Cycle transient_window = 100;
  Cycle nominal_frequency = 1'000'000'000;
  // Cycles from a load's issue to its store-buffer probe.
  Cycle load_lookup_delay = 3;
  // The probe time of each attempt's faulting load is offset by a seeded
  // value uniform in [0, issue_jitter).
  Cycle issue_jitter = 300;

  // Throws SimError(kInvalidTiming) when an ordering invariant is broken.
  void Validate() const;

  friend bool operator==(const TimingModel&, const TimingModel&) = default;
};

// ---------------------------------------------------------------------------
// Store buffer

struct StoreBufferEntry {
  Address full_vaddr = 0;
  std::uint32_t page_offset = 0;
  std::vector<std::uint8_t> data;
  std::uint32_t size = 0;
  Cycle inserted_at = 0;
  Cycle drain_at = 0;

  bool LiveAt(Cycle now) const { return now < drain_at; }
  bool Covers(std::uint32_t offset, std::uint32_t len) const {
    return offset >= page_offset && offset + len <= page_offset + size;
  }

  friend bool operator==(const StoreBufferEntry&,
                         const StoreBufferEntry&) = default;
};

Cycle DrainDelay(CacheLineState line_state, PrepOp prep,
                 const TimingModel& timing);

class StoreBuffer {
 public:
  // Appends an entry draining after DrainDelay(line_state, prep). Throws
  // SimError(kStoreSplitUnsupported) for a store crossing a 64-byte line and
  // SimError(kInvalidArgument) for an empty or oversized store.
  const StoreBufferEntry& Insert(Address vaddr,
                                 std::span<const std::uint8_t> data, Cycle now,
                                 CacheLineState line_state, PrepOp prep,
                                 const TimingModel& timing);

  // Youngest entry live at `now` whose page-offset range contains
  // [offset, offset + size). Matching ignores the page number.
  std::optional<StoreBufferEntry> LookupAlias(std::uint32_t offset,
                                              std::uint32_t size,
                                              Cycle now) const;

  // Cycle at which every entry has drained (now if already empty).
  Cycle DrainedAt(Cycle now) const;
  // Drops entries that are no longer live.
  void Retire(Cycle now);
  void Clear() { entries_.clear(); }

  std::span<const StoreBufferEntry> entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<StoreBufferEntry> entries_;
};

// ---------------------------------------------------------------------------
// Microcode

struct MicrocodeProfile {
  std::uint32_t revision = 0;
  std::chrono::year_month_day date{};
  bool forwarding_mitigated = false;
  bool reported_mds_no = true;

  friend bool operator==(const MicrocodeProfile&,
                         const MicrocodeProfile&) = default;
};

// Ice Lake client (Core i5-1035G1) microcode revisions, oldest first.
std::span<const MicrocodeProfile> BuiltinMicrocodeProfiles();
std::optional<MicrocodeProfile> FindBuiltinProfile(std::uint32_t revision);

std::string FormatRevision(std::uint32_t revision);
std::string FormatDate(std::chrono::year_month_day date);

// ---------------------------------------------------------------------------
// Whole machine

struct ArchitecturalState {
  std::array<std::uint64_t, 16> regs{};
  std::map<Address, std::uint8_t> memory;

  friend bool operator==(const ArchitecturalState&,
                         const ArchitecturalState&) = default;
};

struct MachineState {
  MachineState() = default;
  MachineState(const TimingModel& tm, const MicrocodeProfile& profile)
      : timing(tm), microcode(profile) {}

  TimingModel timing;
  MicrocodeProfile microcode;
  PageTable pages;
  Cache cache;
  StoreBuffer store_buffer;
  Cycle now = 0;
  ArchitecturalState arch;
  Address probe_stride = kPageSize;
  std::map<std::string, Address, std::less<>> symbols;

  void Bind(std::string_view symbol, Address vaddr) {
    symbols.insert_or_assign(std::string(symbol), vaddr);
  }
  // Throws SimError(kUnboundSymbol).
  Address Resolve(std::string_view symbol) const;

  std::uint64_t ReadMemory(Address vaddr, std::uint32_t size) const;
  void WriteMemory(Address vaddr, std::span<const std::uint8_t> bytes);
};

}  // namespace sbsim

#endif  // SBSIM_MACHINE_H_
