#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tensorql::cli {

// Runs one command line (without the program name). Exit codes: 0 success,
// 1 parse or I/O error, 2 unsupported query feature.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace tensorql::cli
