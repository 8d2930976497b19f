#ifndef SBSIM_TABLE_H_
#define SBSIM_TABLE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "sbsim/config.h"
#include "sbsim/machine.h"

namespace sbsim {

// Two minutes at the nominal 1 GHz.
inline constexpr Cycle kDefaultBudget = 120'000'000'000;

struct TableRow {
  MicrocodeProfile profile;
  bool vulnerable = false;  // any prep mode leaked
  double rate_clflush = 0.0;
  double rate_lockinc = 0.0;
  double rate_unmodified = 0.0;
};

struct TableOptions {
  SimConfig sim;
  std::size_t secret_len = 64;
  Cycle budget = kDefaultBudget;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Runs the canonical US-fault program for every built-in profile and prep
// mode. Identical output for any jobs value.
std::vector<TableRow> BuildTable(const TableOptions& options);

inline constexpr const char* kTableCsvHeader =
    "mc_version,mc_date,vulnerable,clflush_rate,lockinc_rate,unmodified_rate";

std::string FormatRate(double rate);
std::string FormatTableCsv(const std::vector<TableRow>& rows);

}  // namespace sbsim

#endif  // SBSIM_TABLE_H_
