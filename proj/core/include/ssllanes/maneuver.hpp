#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace ssllanes {

// Coarse future-motion categories, also the maneuver-classification label set.
enum class Maneuver : int {
  maintain_speed = 0,
  accelerate = 1,
  decelerate = 2,
  turn_left = 3,
  turn_right = 4,
  lane_change = 5,
};

constexpr int kNumManeuvers = 6;

inline const char* to_string(Maneuver m) {
  switch (m) {
    case Maneuver::maintain_speed: return "maintain-speed";
    case Maneuver::accelerate: return "accelerate";
    case Maneuver::decelerate: return "decelerate";
    case Maneuver::turn_left: return "turn-left";
    case Maneuver::turn_right: return "turn-right";
    case Maneuver::lane_change: return "lane-change";
  }
  return "?";
}

inline Maneuver maneuver_from_string(const std::string& name) {
  for (int i = 0; i < kNumManeuvers; ++i)
    if (name == to_string(static_cast<Maneuver>(i))) return static_cast<Maneuver>(i);
  throw std::invalid_argument("unknown maneuver: " + name);
}

}  // namespace ssllanes
