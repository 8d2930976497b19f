#ifndef SBSIM_CLI_H_
#define SBSIM_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace sbsim {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVulnerable = 1;  // check: VulnerableMSBDS
inline constexpr int kExitBadFlags = 2;
inline constexpr int kExitProgramError = 3;
inline constexpr int kExitSnapshotError = 4;

// Entry point for the `sbsim` tool. args[0] is the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace sbsim

#endif  // SBSIM_CLI_H_
