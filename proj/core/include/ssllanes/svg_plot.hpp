// Static SVG rendering of a scene: lane polylines, observed past, ground-truth
// future, predicted modes and the 2 m miss circle around the endpoint.
#pragma once

#include <string>

#include "ssllanes/model.hpp"
#include "ssllanes/scenegraph.hpp"

namespace ssllanes {

std::string scene_svg(const Scene& scene, const Forecast* forecast = nullptr);
void write_scene_svg(const std::string& path, const Scene& scene,
                     const Forecast* forecast = nullptr);

}  // namespace ssllanes
