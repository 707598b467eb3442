// Line-delimited scene files: one JSON object per line, adjacency stored as
// edge lists, floats written with round-trip precision.
#pragma once

#include <string>
#include <vector>

#include "ssllanes/scenegraph.hpp"

namespace ssllanes {

void save_scenes(const std::string& path, const std::vector<Scene>& scenes);

// Throws std::runtime_error naming the 1-based line and the offending field
// on malformed input.
std::vector<Scene> load_scenes(const std::string& path);

std::string scene_to_json_line(const Scene& scene);
Scene scene_from_json_line(const std::string& line);

}  // namespace ssllanes
