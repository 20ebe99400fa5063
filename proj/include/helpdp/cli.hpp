#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "helpdp/io.hpp"

namespace helpdp {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitPlanner = 3,
  kExitIo = 4,
};

inline const std::vector<std::string>& cli_commands() {
  static const std::vector<std::string> commands{
      "gen",  "collect", "fit",      "solve",    "search",
      "annotate", "eval", "oracle", "baseline", "selfreg"};
  return commands;
}

struct CliOptions {
  std::string command;
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<double> budget;
  std::optional<double> r;
  std::optional<std::string> variant;
  std::optional<std::filesystem::path> out;
};

// Config file merged with flag overrides and validated against the schema.
// Relative paths inside the config resolve against the config's directory.
json effective_config(const CliOptions& options);

// Runs one command; messages go to `out` / `err`. Returns the exit code.
int run_command(const CliOptions& options, std::ostream& out, std::ostream& err);

}  // namespace helpdp
