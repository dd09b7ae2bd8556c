#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace iotnat::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs the command line. Errors produce one stderr line of the form
// "error code=<code> detail=<text>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace iotnat::cli
