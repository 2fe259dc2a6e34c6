#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace expertad {

/// Exit codes: 0 success, 2 config/schema, 3 numerical, 4 I/O.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace expertad
