// Procedural scene generation: lane-graph templates plus kinematically scripted
// agents with a controllable maneuver mix. Scenes come out normalized, cropped
// and tagged with {region, maneuver, template}; scripted maneuvers are exact by
// construction, which makes them an oracle for the maneuver labeler.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ssllanes/maneuver.hpp"
#include "ssllanes/scenegraph.hpp"

namespace ssllanes {

enum class LaneTemplate { straight, t_intersection, cross_intersection, curve };
const char* to_string(LaneTemplate t);

constexpr double kLaneWidth = 3.5;  // meters, standard roadway width

struct WorldConfig {
  std::uint64_t seed = 0;
  int n_scenes = 1000;
  std::map<Maneuver, double> maneuver_mix = {
      {Maneuver::maintain_speed, 1.0}, {Maneuver::accelerate, 1.0},
      {Maneuver::decelerate, 1.0},     {Maneuver::turn_left, 1.0},
      {Maneuver::turn_right, 1.0},     {Maneuver::lane_change, 1.0},
  };
  std::map<std::string, double> region_mix = {{"A", 0.8}, {"B", 0.2}};
  std::pair<int, int> agents_per_scene = {1, 5};  // focus agent included
  double node_spacing = 4.0;      // meters between lane nodes
  double noise_sigma = 0.01;      // past-position observation noise, meters
  int history_len = 20;           // L (2 s at 10 Hz)
  int horizon = 30;               // T (3 s at 10 Hz)
  double crop_radius = 100.0;     // meters
  double val_fraction = 0.2;

  void validate() const;  // throws std::invalid_argument
};

struct LaneTemplateOptions {
  int n_lanes = 2;            // parallel lanes for straight/curve
  double lane_len = 90.0;     // straight/curve main length, meters
  double arm_len = 30.0;      // junction arm length, meters
  double junction_half = 7.0; // junction box half size, meters
};

LaneGraph gen_lane_graph(std::uint64_t seed, LaneTemplate tmpl, double spacing,
                         const LaneTemplateOptions& opts = {});

Scene gen_scene(std::uint64_t seed, const WorldConfig& config);

struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> val;
};
Dataset gen_dataset(const WorldConfig& config);

}  // namespace ssllanes
