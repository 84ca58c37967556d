#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs one subcommand. `args` includes the program name. Results go to `out`,
// progress and errors to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfn::cli
