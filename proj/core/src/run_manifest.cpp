#include "ssllanes/run_manifest.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ssllanes {

void write_run_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["subcommand"] = manifest.subcommand;
  j["config"] = manifest.config;
  j["seed"] = manifest.seed;
  j["inputs"] = manifest.inputs;
  j["outputs"] = manifest.outputs;
  j["wall_clock_sec"] = manifest.wall_clock_sec;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open manifest for writing: " + path);
  os << j.dump(2) << "\n";
}

}  // namespace ssllanes
