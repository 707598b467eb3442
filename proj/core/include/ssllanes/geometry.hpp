// Small 2-D geometry helpers shared across the scene model, the generator
// and the pseudo-labelers. Everything is plain value types in meters / radians.
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace ssllanes {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2& v) { return std::sqrt(v.x * v.x + v.y * v.y); }
inline double distance(const Vec2& a, const Vec2& b) { return norm(a - b); }

inline Vec2 rotated(const Vec2& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

inline double angle_of(const Vec2& v) { return std::atan2(v.y, v.x); }

// Absolute angle between v and the +x axis, in [0, pi].
inline double angle_from_x_axis(const Vec2& v) {
  return std::abs(std::atan2(v.y, v.x));
}

inline Vec2 normalized_or_zero(const Vec2& v, double eps = 1e-12) {
  const double n = norm(v);
  if (n < eps) return {0.0, 0.0};
  return {v.x / n, v.y / n};
}

// Distance from p to the segment [a, b].
inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 <= 0.0) return distance(p, a);
  double t = dot(p - a, ab) / len2;
  t = std::fmin(1.0, std::fmax(0.0, t));
  return distance(p, a + ab * t);
}

// Distance from p to a polyline given as an ordered point list.
inline double point_polyline_distance(const Vec2& p, const std::vector<Vec2>& pts) {
  if (pts.empty()) return std::numeric_limits<double>::infinity();
  if (pts.size() == 1) return distance(p, pts[0]);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    best = std::fmin(best, point_segment_distance(p, pts[i], pts[i + 1]));
  }
  return best;
}

// Arc-length walker over a polyline: point and tangent at distance s from the start.
class PolylinePath {
 public:
  PolylinePath() = default;
  explicit PolylinePath(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    cum_.resize(pts_.size(), 0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) {
      cum_[i] = cum_[i - 1] + distance(pts_[i - 1], pts_[i]);
    }
  }

  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }
  const std::vector<Vec2>& points() const { return pts_; }

  Vec2 point_at(double s) const {
    if (pts_.empty()) return {};
    if (pts_.size() == 1 || s <= 0.0) return pts_.front();
    if (s >= length()) {
      // extrapolate along the final segment
      const Vec2 d = tangent_at(length());
      return pts_.back() + d * (s - length());
    }
    const std::size_t i = segment_index(s);
    const double seg = cum_[i + 1] - cum_[i];
    const double t = seg > 0.0 ? (s - cum_[i]) / seg : 0.0;
    return pts_[i] + (pts_[i + 1] - pts_[i]) * t;
  }

  Vec2 tangent_at(double s) const {
    if (pts_.size() < 2) return {1.0, 0.0};
    std::size_t i = s >= length() ? pts_.size() - 2 : segment_index(s);
    return normalized_or_zero(pts_[i + 1] - pts_[i]);
  }

 private:
  std::size_t segment_index(double s) const {
    std::size_t lo = 0, hi = cum_.size() - 1;
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cum_[mid] <= s) lo = mid; else hi = mid;
    }
    return lo;
  }

  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

}  // namespace ssllanes
