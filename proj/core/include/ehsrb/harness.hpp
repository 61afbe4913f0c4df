#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ehsrb/io.hpp"

namespace ehsrb {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,  // run completed, a verification verdict is negative
  kExitUsage = 2,
  kExitConfig = 3,
  kExitOutput = 4,
  kExitResumeMismatch = 5,
  kExitRuntime = 6,
};

struct RunFlags {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::filesystem::path out = "out";
  std::optional<long> n;
  std::optional<int> q;
  std::optional<double> theta_bar;
  std::optional<double> alpha;
  std::optional<int> grid;
  std::optional<std::filesystem::path> histogram;  // tail-fit input
  bool resume = false;

  Json to_json() const;  // flags as given, for the manifest
};

const std::vector<std::string>& subcommand_names();
std::string usage_text();
std::string tool_version();

// Defaults, then the config file, then flag overrides.
Json effective_config(const std::string& name, const RunFlags& flags);

// Digest of what determines the outputs: command, effective config, version.
std::string run_digest(const std::string& name, const Json& config);

// Runs one subcommand, writing artifacts and manifest.json under flags.out.
// Diagnostics go to `err`, a one-line summary to `out`.
int run_subcommand(const std::string& name, const RunFlags& flags, std::ostream& out,
                   std::ostream& err);

}  // namespace ehsrb
