#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prefmem::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kMissingArtifact = 2, kDataError = 3 };

// Entry point shared by the binary and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace prefmem::cli
