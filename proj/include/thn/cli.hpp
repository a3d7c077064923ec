#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace thn::cli {

// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace thn::cli
