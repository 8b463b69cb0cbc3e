#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace biqc::cli {

/// Runs one subcommand; args excludes the program name. Returns the exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace biqc::cli
