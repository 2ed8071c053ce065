#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gaitml {

// Runs one command line (without the program name). Returns the process exit
// code: 0 success, 2 validation, 3 I/O, 4 numeric failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace gaitml
