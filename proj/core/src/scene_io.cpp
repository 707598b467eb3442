#include "ssllanes/scene_io.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ssllanes {

using nlohmann::json;

namespace {

json points_to_json(const std::vector<Vec2>& pts) {
  json out = json::array();
  for (const auto& p : pts) out.push_back({p.x, p.y});
  return out;
}

std::vector<Vec2> points_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw std::runtime_error("field " + field + ": expected array");
  std::vector<Vec2> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2)
      throw std::runtime_error("field " + field + ": expected [x,y] pairs");
    out.emplace_back(e[0].get<double>(), e[1].get<double>());
  }
  return out;
}

json edges_to_json(const EdgeList& edges) {
  json out = json::array();
  for (const auto& [g, h] : edges) out.push_back({g, h});
  return out;
}

EdgeList edges_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw std::runtime_error("field " + field + ": expected array");
  EdgeList out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2)
      throw std::runtime_error("field " + field + ": expected [g,h] pairs");
    out.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  return out;
}

}  // namespace

std::string scene_to_json_line(const Scene& scene) {
  json g;
  g["positions"] = points_to_json(scene.graph.node_positions);
  json feats = json::array();
  for (int n = 0; n < scene.graph.num_nodes(); ++n) {
    json row = json::array();
    for (int f = 0; f < kNodeFeatureDim; ++f) row.push_back(scene.graph.feature(n, f));
    feats.push_back(std::move(row));
  }
  g["features"] = std::move(feats);
  g["pre"] = edges_to_json(scene.graph.edges(Relation::pre));
  g["suc"] = edges_to_json(scene.graph.edges(Relation::suc));
  g["left"] = edges_to_json(scene.graph.edges(Relation::left));
  g["right"] = edges_to_json(scene.graph.edges(Relation::right));
  json lanes = json::object();
  for (const auto& [lane_id, nodes] : scene.graph.lane_membership)
    lanes[std::to_string(lane_id)] = nodes;
  g["lanes"] = std::move(lanes);
  json inter = json::array();
  for (bool b : scene.graph.intersection_flags) inter.push_back(b ? 1 : 0);
  g["intersection"] = std::move(inter);

  json agents = json::array();
  for (const auto& a : scene.agents) {
    json ja;
    ja["past"] = points_to_json(a.past_positions);
    ja["future"] = points_to_json(a.future_positions);
    json mask = json::array();
    for (bool b : a.observed_mask) mask.push_back(b ? 1 : 0);
    ja["mask"] = std::move(mask);
    agents.push_back(std::move(ja));
  }

  json out;
  out["graph"] = std::move(g);
  out["agents"] = std::move(agents);
  out["focus"] = scene.focus_agent;
  out["frame"] = {{"origin", {scene.frame.origin.x, scene.frame.origin.y}},
                  {"rotation", scene.frame.rotation}};
  out["tags"] = scene.tags;
  return out.dump();
}

Scene scene_from_json_line(const std::string& line) {
  json j = json::parse(line);
  Scene scene;

  const json& g = j.at("graph");
  scene.graph.node_positions = points_from_json(g.at("positions"), "graph.positions");
  const json& feats = g.at("features");
  if (!feats.is_array() || feats.size() != scene.graph.node_positions.size())
    throw std::runtime_error("field graph.features: row count != node count");
  for (const auto& row : feats) {
    if (!row.is_array() || row.size() != kNodeFeatureDim)
      throw std::runtime_error("field graph.features: expected rows of " +
                               std::to_string(kNodeFeatureDim));
    for (const auto& v : row) scene.graph.node_features.push_back(v.get<double>());
  }
  scene.graph.edges(Relation::pre) = edges_from_json(g.at("pre"), "graph.pre");
  scene.graph.edges(Relation::suc) = edges_from_json(g.at("suc"), "graph.suc");
  scene.graph.edges(Relation::left) = edges_from_json(g.at("left"), "graph.left");
  scene.graph.edges(Relation::right) = edges_from_json(g.at("right"), "graph.right");
  for (const auto& [key, nodes] : g.at("lanes").items())
    scene.graph.lane_membership[std::stoi(key)] = nodes.get<std::vector<int>>();
  for (const auto& v : g.at("intersection"))
    scene.graph.intersection_flags.push_back(v.get<int>() != 0);

  for (const auto& ja : j.at("agents")) {
    std::vector<bool> mask;
    for (const auto& v : ja.at("mask")) mask.push_back(v.get<int>() != 0);
    scene.agents.push_back(AgentTrack::from_positions(
        points_from_json(ja.at("past"), "agents.past"),
        points_from_json(ja.at("future"), "agents.future"), std::move(mask)));
  }
  scene.focus_agent = j.at("focus").get<int>();
  const json& frame = j.at("frame");
  scene.frame.origin = {frame.at("origin")[0].get<double>(),
                        frame.at("origin")[1].get<double>()};
  scene.frame.rotation = frame.at("rotation").get<double>();
  if (j.contains("tags"))
    scene.tags = j.at("tags").get<std::map<std::string, std::string>>();

  if (scene.focus_agent < 0 || scene.focus_agent >= static_cast<int>(scene.agents.size()))
    throw std::runtime_error("field focus: index out of range");
  return scene;
}

void save_scenes(const std::string& path, const std::vector<Scene>& scenes) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open scene file for writing: " + path);
  for (const auto& s : scenes) os << scene_to_json_line(s) << "\n";
  if (!os) throw std::runtime_error("failed writing scene file: " + path);
}

std::vector<Scene> load_scenes(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open scene file: " + path);
  std::vector<Scene> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(scene_from_json_line(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ssllanes
