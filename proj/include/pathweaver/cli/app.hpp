#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pathweaver::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;
inline constexpr int kExitTransport = 5;

// Entry point behind the pathweaver binary. Failures print one JSON line
// {"error": {"kind", "exit_code", "message"}} to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pathweaver::cli
