#ifndef SBSIM_MICROCODE_LAB_H_
#define SBSIM_MICROCODE_LAB_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sbsim {

struct CpuSnapshot {
  std::string vendor;
  int family = 0;
  int model = 0;
  int stepping = 0;
  std::uint32_t microcode_revision = 0;
  std::optional<std::uint64_t> arch_capabilities_raw;

  friend bool operator==(const CpuSnapshot&, const CpuSnapshot&) = default;
};

class SnapshotError : public std::runtime_error {
 public:
  enum class Kind { kMissingField, kMalformedHex, kMalformedLine };

  SnapshotError(Kind kind, std::string field, const std::string& what)
      : std::runtime_error(what), kind_(kind), field_(std::move(field)) {}

  Kind kind() const { return kind_; }
  const std::string& field() const { return field_; }

 private:
  Kind kind_;
  std::string field_;
};

// `key: value` lines, `#` comments. Keys: vendor, family, model, stepping,
// microcode (hex), arch_capabilities (hex, optional). family/model/stepping
// accept decimal or 0x-prefixed hex. Throws SnapshotError.
CpuSnapshot ParseSnapshot(std::string_view text);
std::string FormatSnapshot(const CpuSnapshot& snapshot);

// IA32_ARCH_CAPABILITIES bit 5.
constexpr bool MdsNoSet(std::uint64_t arch_capabilities_raw) {
  return (arch_capabilities_raw >> 5) & 1;
}

// Ice Lake client, as in the Core i5-1035G1.
inline constexpr int kIceLakeFamily = 6;
inline constexpr int kIceLakeModel = 126;
// Revision carrying the store-buffer fix according to the vendor's triage.
inline constexpr std::uint32_t kDisclosedFixRevision = 0x5c;
// First revision observed not to leak.
inline constexpr std::uint32_t kFirstMitigatedRevision = 0x66;

enum class AssessmentStatus {
  kVulnerableMSBDS,
  kMitigated,
  kPresumedMitigated,
  kNotApplicable,
};

std::string_view ToString(AssessmentStatus status);

struct Assessment {
  AssessmentStatus status = AssessmentStatus::kNotApplicable;
  bool errata_057 = false;
  std::string rationale;
};

Assessment Assess(const CpuSnapshot& snapshot);

// status / errata_057 / rationale as `key: value` lines.
std::string FormatAssessment(const Assessment& assessment);

}  // namespace sbsim

#endif  // SBSIM_MICROCODE_LAB_H_
