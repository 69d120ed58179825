#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsde/io.hpp"

namespace nsde {

/// Bad flags, a missing or malformed config, or a field that fails validation.
/// Maps to exit code 2; library errors (nsde::Error) map to 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string version_string();

/// Applies "a.b.c=value"; the value is parsed as JSON when it parses, else taken as a string.
void apply_override(Json& config, const std::string& assignment);

/// Entry point of the nsde tool. args excludes the program name; a leading "run" is
/// accepted and ignored. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nsde
