#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ruleprompt::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitEndpoint = 3;
inline constexpr int kExitDataset = 4;

/// Runs one invocation; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct FlagInfo {
  std::string subcommand;
  std::string flag;
};

/// Every long flag registered on every subcommand (and globally).
std::vector<FlagInfo> flag_registry();

}  // namespace ruleprompt::cli
