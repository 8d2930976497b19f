#include "sbsim/machine.h"

#include <algorithm>
#include <cstdio>

namespace sbsim {

using std::chrono::day;
using std::chrono::month;
using std::chrono::year;
using std::chrono::year_month_day;

void PageTable::Map(const PageMapping& mapping) {
  if (mapping.vaddr % kPageSize != 0) {
    throw SimError(SimError::Kind::kInvalidMapping,
                   "page mapping is not 4096-aligned");
  }
  if (mapping.protection_key > 15) {
    throw SimError(SimError::Kind::kInvalidMapping,
                   "protection key out of range 0-15");
  }
  pages_.insert_or_assign(mapping.vaddr, mapping);
}

void PageTable::Unmap(Address vaddr) { pages_.erase(PageBase(vaddr)); }

const PageMapping* PageTable::Find(Address vaddr) const {
  auto it = pages_.find(PageBase(vaddr));
  return it == pages_.end() ? nullptr : &it->second;
}

std::string_view ToString(AccessOutcome outcome) {
  switch (outcome) {
    case AccessOutcome::kOk: return "Ok";
    case AccessOutcome::kFaultUS: return "FaultUS";
    case AccessOutcome::kFaultPK: return "FaultPK";
    case AccessOutcome::kFaultNP: return "FaultNP";
  }
  return "?";
}

AccessOutcome ClassifyAccess(const PageTable& table, Address vaddr,
                             bool from_user) {
  const PageMapping* page = table.Find(vaddr);
  if (page == nullptr || !page->present) return AccessOutcome::kFaultNP;
  if (from_user && !page->user_accessible) return AccessOutcome::kFaultUS;
  if (page->key_denied) return AccessOutcome::kFaultPK;
  return AccessOutcome::kOk;
}

std::string_view ToString(CacheLineState state) {
  switch (state) {
    case CacheLineState::kInvalid: return "Invalid";
    case CacheLineState::kShared: return "Shared";
    case CacheLineState::kExclusive: return "Exclusive";
    case CacheLineState::kModified: return "Modified";
  }
  return "?";
}

void Cache::Flush(Address addr) { lines_.erase(LineBase(addr)); }

void Cache::Touch(Address addr, AccessKind kind) {
  auto& state = lines_[LineBase(addr)];
  if (kind == AccessKind::kWrite) {
    state = CacheLineState::kModified;
  } else if (state == CacheLineState::kInvalid) {
    state = CacheLineState::kExclusive;
  }
}

CacheLineState Cache::State(Address addr) const {
  auto it = lines_.find(LineBase(addr));
  return it == lines_.end() ? CacheLineState::kInvalid : it->second;
}

std::string_view ToString(PrepOp prep) {
  switch (prep) {
    case PrepOp::kNone: return "none";
    case PrepOp::kClflush: return "clflush";
    case PrepOp::kLockInc: return "lockinc";
  }
  return "?";
}

std::optional<PrepOp> ParsePrepOp(std::string_view text) {
  if (text == "none" || text == "unmodified") return PrepOp::kNone;
  if (text == "clflush" || text == "flush") return PrepOp::kClflush;
  if (text == "lockinc" || text == "lock-inc") return PrepOp::kLockInc;
  return std::nullopt;
}

void TimingModel::Validate() const {
  auto fail = [](const char* what) {
    throw SimError(SimError::Kind::kInvalidTiming, what);
  };
  if (drain_cached == 0) fail("drain_cached must be > 0");
  if (!(drain_flushed > drain_cached)) {
    fail("drain_flushed must exceed drain_cached");
  }
  if (!(drain_locked > drain_flushed)) {
    fail("drain_locked must exceed drain_flushed");
  }
  if (!(miss_latency > hit_latency)) fail("miss_latency must exceed hit_latency");
  if (transient_window == 0) fail("transient_window must be > 0");
  if (nominal_frequency == 0) fail("nominal_frequency must be > 0");
  if (issue_jitter == 0) fail("issue_jitter must be > 0");
}

Cycle DrainDelay(CacheLineState line_state, PrepOp prep,
                 const TimingModel& timing) {
  if (prep == PrepOp::kLockInc) return timing.drain_locked;
  // A clflush after the store leaves the line invalid while it is pending.
  if (prep == PrepOp::kClflush || line_state == CacheLineState::kInvalid) {
    return timing.drain_flushed;
  }
  return timing.drain_cached;
}

const StoreBufferEntry& StoreBuffer::Insert(Address vaddr,
                                            std::span<const std::uint8_t> data,
                                            Cycle now,
                                            CacheLineState line_state,
                                            PrepOp prep,
                                            const TimingModel& timing) {
  if (data.empty() || data.size() > 8) {
    throw SimError(SimError::Kind::kInvalidArgument,
                   "store size must be 1-8 bytes");
  }
  if (LineBase(vaddr) != LineBase(vaddr + data.size() - 1)) {
    throw SimError(SimError::Kind::kStoreSplitUnsupported,
                   "store crosses a cache line");
  }
  StoreBufferEntry entry;
  entry.full_vaddr = vaddr;
  entry.page_offset = PageOffset(vaddr);
  entry.data.assign(data.begin(), data.end());
  entry.size = static_cast<std::uint32_t>(data.size());
  entry.inserted_at = now;
  entry.drain_at = now + DrainDelay(line_state, prep, timing);
  entries_.push_back(std::move(entry));
  return entries_.back();
}

std::optional<StoreBufferEntry> StoreBuffer::LookupAlias(std::uint32_t offset,
                                                         std::uint32_t size,
                                                         Cycle now) const {
  // Entries are appended in issue order, so scan from the back. Equal
  // inserted_at values resolve to the later insertion.
  const StoreBufferEntry* best = nullptr;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->LiveAt(now) || !it->Covers(offset, size)) continue;
    if (best == nullptr || it->inserted_at > best->inserted_at) best = &*it;
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

Cycle StoreBuffer::DrainedAt(Cycle now) const {
  Cycle t = now;
  for (const auto& e : entries_) t = std::max(t, e.drain_at);
  return t;
}

void StoreBuffer::Retire(Cycle now) {
  std::erase_if(entries_,
                [now](const StoreBufferEntry& e) { return !e.LiveAt(now); });
}

namespace {

constexpr year_month_day Ymd(int y, unsigned m, unsigned d) {
  return year_month_day{year{y}, month{m}, day{d}};
}

const std::vector<MicrocodeProfile>& Profiles() {
  static const std::vector<MicrocodeProfile> kProfiles = {
      {0x32, Ymd(2019, 7, 5), false, true},
      {0x36, Ymd(2019, 7, 18), false, true},
      {0x46, Ymd(2019, 9, 5), false, true},
      {0x48, Ymd(2019, 9, 12), false, true},
      {0x50, Ymd(2019, 10, 27), false, true},
      {0x56, Ymd(2019, 11, 5), false, true},
      {0x5a, Ymd(2019, 11, 19), false, true},
      {0x66, Ymd(2020, 1, 9), true, true},
      {0x70, Ymd(2020, 2, 17), true, true},
      {0x82, Ymd(2020, 4, 22), true, true},
      {0x86, Ymd(2020, 5, 5), true, true},
  };
  return kProfiles;
}

}  // namespace

std::span<const MicrocodeProfile> BuiltinMicrocodeProfiles() {
  return Profiles();
}

std::optional<MicrocodeProfile> FindBuiltinProfile(std::uint32_t revision) {
  for (const auto& p : Profiles()) {
    if (p.revision == revision) return p;
  }
  return std::nullopt;
}

std::string FormatRevision(std::uint32_t revision) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%x", revision);
  return buf;
}

std::string FormatDate(year_month_day date) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u",
                static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()),
                static_cast<unsigned>(date.day()));
  return buf;
}

Address MachineState::Resolve(std::string_view symbol) const {
  auto it = symbols.find(symbol);
  if (it == symbols.end()) {
    throw SimError(SimError::Kind::kUnboundSymbol,
                   "unbound symbol '" + std::string(symbol) + "'");
  }
  return it->second;
}

std::uint64_t MachineState::ReadMemory(Address vaddr,
                                       std::uint32_t size) const {
  std::uint64_t value = 0;
  for (std::uint32_t i = 0; i < size; ++i) {
    auto it = arch.memory.find(vaddr + i);
    const std::uint64_t byte = it == arch.memory.end() ? 0 : it->second;
    value |= byte << (8 * i);
  }
  return value;
}

void MachineState::WriteMemory(Address vaddr,
                               std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    arch.memory[vaddr + i] = bytes[i];
  }
}

}  // namespace sbsim
