#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace s2g::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

// Runs one subcommand. args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Parses a "key = value" config file body. Blank lines and lines starting
// with '#' are ignored.
std::map<std::string, std::string> parse_config(const std::string& text);

// The fully merged settings a subcommand would run with: defaults, then the
// config file, then flags. Throws on usage errors.
std::map<std::string, std::string> resolve_settings(const std::vector<std::string>& args);

}  // namespace s2g::cli
