// Every CLI run drops a manifest beside its outputs with the resolved
// configuration, seed and paths, enough to reproduce the run bit-exactly.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ssllanes {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;  // resolved flag values
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double wall_clock_sec = 0.0;
};

void write_run_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace ssllanes
