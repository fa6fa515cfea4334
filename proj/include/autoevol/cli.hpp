#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace autoevol {

// Exit codes: 0 success, 1 aborted run or failure threshold exceeded,
// 2 invalid configuration, arguments or inputs.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace autoevol
