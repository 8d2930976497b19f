#include "sbsim/microcode_lab.h"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <map>

#include "sbsim/machine.h"

namespace sbsim {

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::uint64_t ParseHex(std::string_view field, std::string_view s) {
  s = Trim(s);
  if (s.size() >= 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
  }
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw SnapshotError(SnapshotError::Kind::kMalformedHex, std::string(field),
                        "malformed hex value for '" + std::string(field) + "'");
  }
  return v;
}

int ParseInt(std::string_view field, std::string_view s) {
  s = Trim(s);
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    return static_cast<int>(ParseHex(field, s));
  }
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v < 0) {
    throw SnapshotError(SnapshotError::Kind::kMalformedLine, std::string(field),
                        "malformed integer for '" + std::string(field) + "'");
  }
  return v;
}

bool IsTableVulnerable(std::uint32_t revision) {
  const auto profile = FindBuiltinProfile(revision);
  return profile && !profile->forwarding_mitigated;
}

}  // namespace

CpuSnapshot ParseSnapshot(std::string_view text) {
  std::map<std::string, std::string, std::less<>> fields;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    line = Trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw SnapshotError(SnapshotError::Kind::kMalformedLine, "",
                          "line " + std::to_string(line_no) +
                              ": expected 'key: value'");
    }
    fields.insert_or_assign(std::string(Trim(line.substr(0, colon))),
                            std::string(Trim(line.substr(colon + 1))));
  }

  auto require = [&](std::string_view key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end() || it->second.empty()) {
      throw SnapshotError(SnapshotError::Kind::kMissingField, std::string(key),
                          "missing field '" + std::string(key) + "'");
    }
    return it->second;
  };

  CpuSnapshot snap;
  snap.vendor = require("vendor");
  snap.family = ParseInt("family", require("family"));
  snap.model = ParseInt("model", require("model"));
  snap.stepping = ParseInt("stepping", require("stepping"));
  snap.microcode_revision =
      static_cast<std::uint32_t>(ParseHex("microcode", require("microcode")));
  if (auto it = fields.find("arch_capabilities");
      it != fields.end() && !it->second.empty()) {
    snap.arch_capabilities_raw = ParseHex("arch_capabilities", it->second);
  }
  return snap;
}

std::string FormatSnapshot(const CpuSnapshot& s) {
  std::string out;
  out += "vendor: " + s.vendor + "\n";
  out += "family: " + std::to_string(s.family) + "\n";
  out += "model: " + std::to_string(s.model) + "\n";
  out += "stepping: " + std::to_string(s.stepping) + "\n";
  out += "microcode: " + FormatRevision(s.microcode_revision) + "\n";
  if (s.arch_capabilities_raw) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "0x%llx",
                  static_cast<unsigned long long>(*s.arch_capabilities_raw));
    out += std::string("arch_capabilities: ") + buf + "\n";
  }
  return out;
}

std::string_view ToString(AssessmentStatus status) {
  switch (status) {
    case AssessmentStatus::kVulnerableMSBDS: return "VulnerableMSBDS";
    case AssessmentStatus::kMitigated: return "Mitigated";
    case AssessmentStatus::kPresumedMitigated: return "PresumedMitigated";
    case AssessmentStatus::kNotApplicable: return "NotApplicable";
  }
  return "?";
}

Assessment Assess(const CpuSnapshot& snapshot) {
  Assessment a;
  const std::string rev = FormatRevision(snapshot.microcode_revision);
  if (snapshot.vendor != "GenuineIntel" ||
      snapshot.family != kIceLakeFamily || snapshot.model != kIceLakeModel) {
    a.status = AssessmentStatus::kNotApplicable;
    a.rationale = "not an Ice Lake client CPU (family 6, model 126)";
    return a;
  }

  const std::uint32_t r = snapshot.microcode_revision;
  if (IsTableVulnerable(r)) {
    a.status = AssessmentStatus::kVulnerableMSBDS;
    a.rationale = "microcode " + rev +
                  " is a tested revision that forwards store data to "
                  "faulting loads";
  } else if (r >= kFirstMitigatedRevision) {
    a.status = AssessmentStatus::kMitigated;
    a.rationale = "microcode " + rev + " is at or after 0x66, the first "
                  "tested revision without leakage";
  } else if (r >= kDisclosedFixRevision) {
    a.status = AssessmentStatus::kPresumedMitigated;
    a.rationale = "microcode " + rev + " is at or after 0x5c, where the "
                  "vendor places the fix, but below 0x66, the first revision "
                  "observed not to leak";
  } else {
    a.status = AssessmentStatus::kVulnerableMSBDS;
    a.rationale = "microcode " + rev +
                  " is a pre-table revision below the 0x5c fix";
  }

  if (a.status == AssessmentStatus::kVulnerableMSBDS &&
      snapshot.arch_capabilities_raw &&
      MdsNoSet(*snapshot.arch_capabilities_raw)) {
    a.errata_057 = true;
    a.rationale += "; MDS_NO is set although the CPU leaks (errata 057)";
  }
  return a;
}

std::string FormatAssessment(const Assessment& a) {
  std::string out;
  out += "status: " + std::string(ToString(a.status)) + "\n";
  out += std::string("errata_057: ") + (a.errata_057 ? "true" : "false") + "\n";
  out += "rationale: " + a.rationale + "\n";
  return out;
}

}  // namespace sbsim
