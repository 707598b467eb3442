#include "ssllanes/svg_plot.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace ssllanes {

namespace {

struct Bounds {
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  void include(const Vec2& p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
};

// SVG y grows downward; flip so +y is up like the scene frame.
std::string polyline(const std::vector<Vec2>& pts, const char* color, double width,
                     const char* dash = nullptr, double opacity = 1.0) {
  std::ostringstream os;
  os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
     << "\" stroke-linecap=\"round\" stroke-linejoin=\"round\" opacity=\"" << opacity
     << "\"";
  if (dash) os << " stroke-dasharray=\"" << dash << "\"";
  os << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) os << " ";
    os << pts[i].x << "," << -pts[i].y;
  }
  os << "\"/>\n";
  return os.str();
}

}  // namespace

std::string scene_svg(const Scene& scene, const Forecast* forecast) {
  Bounds b;
  for (const Vec2& p : scene.graph.node_positions) b.include(p);
  for (const auto& a : scene.agents) {
    for (const Vec2& p : a.past_positions) b.include(p);
    for (const Vec2& p : a.future_positions) b.include(p);
  }
  if (forecast)
    for (const auto& mode : forecast->modes)
      for (const Vec2& p : mode) b.include(p);
  const double margin = 8.0;
  const double w = b.max_x - b.min_x + 2 * margin;
  const double h = b.max_y - b.min_y + 2 * margin;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << b.min_x - margin << " "
     << -(b.max_y + margin) << " " << w << " " << h << "\" width=\"800\" height=\""
     << static_cast<int>(800.0 * h / w) << "\">\n";
  os << "  <rect x=\"" << b.min_x - margin << "\" y=\"" << -(b.max_y + margin)
     << "\" width=\"" << w << "\" height=\"" << h << "\" fill=\"#ffffff\"/>\n";

  // lane centerlines, intersection nodes dotted darker
  for (const auto& [lane_id, nodes] : scene.graph.lane_membership) {
    std::vector<Vec2> pts;
    for (int n : nodes) pts.push_back(scene.graph.node_positions[static_cast<std::size_t>(n)]);
    os << polyline(pts, "#c0c0c0", 0.5);
  }
  for (int n = 0; n < scene.graph.num_nodes(); ++n) {
    if (!scene.graph.intersection_flags[static_cast<std::size_t>(n)]) continue;
    const Vec2& p = scene.graph.node_positions[static_cast<std::size_t>(n)];
    os << "  <circle cx=\"" << p.x << "\" cy=\"" << -p.y
       << "\" r=\"0.5\" fill=\"#909090\"/>\n";
  }

  // non-focus agents' observed pasts
  for (int i = 0; i < static_cast<int>(scene.agents.size()); ++i) {
    if (i == scene.focus_agent) continue;
    os << polyline(scene.agents[static_cast<std::size_t>(i)].past_positions, "#7f9cc4",
                   0.5, nullptr, 0.8);
  }

  const AgentTrack& focus = scene.focus();
  os << polyline(focus.past_positions, "#e0b000", 0.9);  // observed past
  if (focus.has_future()) {
    std::vector<Vec2> gt = {focus.current_position()};
    gt.insert(gt.end(), focus.future_positions.begin(), focus.future_positions.end());
    os << polyline(gt, "#d02020", 0.9);
    const Vec2& end = focus.future_positions.back();
    os << "  <circle cx=\"" << end.x << "\" cy=\"" << -end.y
       << "\" r=\"2\" fill=\"none\" stroke=\"#d02020\" stroke-width=\"0.25\" "
          "stroke-dasharray=\"0.8,0.8\"/>\n";
  }

  if (forecast) {
    static const char* dashes[] = {nullptr, "2,1", "1,1", "3,1", "1,2", "4,2"};
    for (std::size_t k = 0; k < forecast->modes.size(); ++k) {
      std::vector<Vec2> pts = {focus.current_position()};
      pts.insert(pts.end(), forecast->modes[k].begin(), forecast->modes[k].end());
      os << polyline(pts, "#2a9d2a", 0.7, dashes[k % 6],
                     0.5 + 0.5 * forecast->scores[k]);
    }
  }
  os << "</svg>\n";
  return os.str();
}

void write_scene_svg(const std::string& path, const Scene& scene,
                     const Forecast* forecast) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open svg for writing: " + path);
  os << scene_svg(scene, forecast);
}

}  // namespace ssllanes
