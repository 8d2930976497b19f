#include "sbsim/table.h"

#include <atomic>
#include <cstdio>
#include <thread>

#include "sbsim/dsl.h"
#include "sbsim/engine.h"

namespace sbsim {

std::vector<TableRow> BuildTable(const TableOptions& options) {
  const auto profiles = BuiltinMicrocodeProfiles();
  constexpr PrepOp kPreps[] = {PrepOp::kClflush, PrepOp::kLockInc,
                               PrepOp::kNone};
  const std::vector<std::uint8_t> secret =
      GenerateSecret(options.secret_len, options.seed);

  const std::size_t jobs_total = profiles.size() * 3;
  std::vector<double> rates(jobs_total, 0.0);
  auto run = [&](std::size_t job) {
    const MicrocodeProfile& profile = profiles[job / 3];
    const PrepOp prep = kPreps[job % 3];
    const LeakageReport r = RunExperiment(
        options.sim.ForProfile(profile),
        CanonicalMsbdsProgram(prep, FaultClass::kUS), secret, options.budget,
        options.seed);
    rates[job] = r.rate;
  };

  if (options.jobs <= 1) {
    for (std::size_t j = 0; j < jobs_total; ++j) run(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (int w = 0; w < options.jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t j = next++; j < jobs_total; j = next++) run(j);
      });
    }
  }

  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    TableRow row;
    row.profile = profiles[i];
    row.rate_clflush = rates[i * 3 + 0];
    row.rate_lockinc = rates[i * 3 + 1];
    row.rate_unmodified = rates[i * 3 + 2];
    row.vulnerable = row.rate_clflush > 0 || row.rate_lockinc > 0 ||
                     row.rate_unmodified > 0;
    rows.push_back(row);
  }
  return rows;
}

std::string FormatRate(double rate) {
  if (rate == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", rate);
  return buf;
}

std::string FormatTableCsv(const std::vector<TableRow>& rows) {
  std::string out = kTableCsvHeader;
  out += "\n";
  for (const auto& row : rows) {
    out += FormatRevision(row.profile.revision) + "," +
           FormatDate(row.profile.date) + "," +
           (row.vulnerable ? "true" : "false") + "," +
           FormatRate(row.rate_clflush) + "," + FormatRate(row.rate_lockinc) +
           "," + FormatRate(row.rate_unmodified) + "\n";
  }
  return out;
}

}  // namespace sbsim
