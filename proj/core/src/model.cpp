#include "ssllanes/model.hpp"

#include "ssllanes/maneuver.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace ssllanes {

using nlohmann::json;

const char* to_string(Pretext p) {
  switch (p) {
    case Pretext::none: return "none";
    case Pretext::mask: return "mask";
    case Pretext::d2i: return "d2i";
    case Pretext::maneuver: return "maneuver";
    case Pretext::goal: return "goal";
  }
  return "?";
}

Pretext pretext_from_string(const std::string& name) {
  for (Pretext p : {Pretext::none, Pretext::mask, Pretext::d2i, Pretext::maneuver,
                    Pretext::goal})
    if (name == to_string(p)) return p;
  throw std::invalid_argument("unknown pretext: " + name);
}

void ModelConfig::validate() const {
  if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
  if (k_modes < 1) throw std::invalid_argument("k_modes must be >= 1");
  if (horizon < 1 || history_len < 2)
    throw std::invalid_argument("horizon must be >= 1 and history_len >= 2");
  if (n_laneconv_blocks < 1) throw std::invalid_argument("n_laneconv_blocks must be >= 1");
  for (std::size_t i = 1; i < dilations.size(); ++i)
    if (dilations[i] <= dilations[i - 1])
      throw std::invalid_argument("dilations must be ascending");
}

std::string ModelConfig::to_json_string() const {
  json j;
  j["hidden_dim"] = hidden_dim;
  j["dilations"] = dilations;
  j["n_laneconv_blocks"] = n_laneconv_blocks;
  j["m2a_radius"] = m2a_radius;
  j["a2a_radius"] = a2a_radius;
  j["k_modes"] = k_modes;
  j["horizon"] = horizon;
  j["history_len"] = history_len;
  j["pretext"] = to_string(pretext);
  return j.dump();
}

ModelConfig ModelConfig::from_json_string(const std::string& json_text) {
  json j = json::parse(json_text);
  ModelConfig cfg;
  cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
  if (j.contains("dilations")) cfg.dilations = j["dilations"].get<std::vector<int>>();
  cfg.n_laneconv_blocks = j.value("n_laneconv_blocks", cfg.n_laneconv_blocks);
  cfg.m2a_radius = j.value("m2a_radius", cfg.m2a_radius);
  cfg.a2a_radius = j.value("a2a_radius", cfg.a2a_radius);
  cfg.k_modes = j.value("k_modes", cfg.k_modes);
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.history_len = j.value("history_len", cfg.history_len);
  if (j.contains("pretext"))
    cfg.pretext = pretext_from_string(j["pretext"].get<std::string>());
  cfg.validate();
  return cfg;
}

// ---- parameter construction ----------------------------------------------------

namespace {

class ParamBuilder {
 public:
  ParamBuilder(ParameterStore& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  void weight(const std::string& name, ParamGroup group, ad::Shape shape, int fan_in) {
    const double bound = std::sqrt(1.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(static_cast<std::size_t>(ad::numel(shape)));
    for (auto& v : values) v = dist(rng_);
    store_.add(name, group, std::move(shape), std::move(values));
  }
  void zeros(const std::string& name, ParamGroup group, ad::Shape shape) {
    store_.add(name, group, shape,
               std::vector<double>(static_cast<std::size_t>(ad::numel(shape)), 0.0));
  }
  void ones(const std::string& name, ParamGroup group, ad::Shape shape) {
    store_.add(name, group, shape,
               std::vector<double>(static_cast<std::size_t>(ad::numel(shape)), 1.0));
  }
  void layer_norm(const std::string& prefix, ParamGroup group, int dim) {
    ones(prefix + ".g", group, {dim});
    zeros(prefix + ".b", group, {dim});
  }
  void conv(const std::string& prefix, ParamGroup group, int co, int ci, int k) {
    weight(prefix + ".w", group, {co, ci, k}, ci * k);
    zeros(prefix + ".b", group, {co});
  }
  void linear(const std::string& prefix, ParamGroup group, int in, int out) {
    weight(prefix + ".w", group, {in, out}, in);
    zeros(prefix + ".b", group, {out});
  }

 private:
  ParameterStore& store_;
  std::mt19937_64 rng_;
};

void build_res_block(ParamBuilder& b, ParamGroup group, const std::string& prefix,
                     int ci, int co, int stride) {
  b.conv(prefix + ".conv1", group, co, ci, 3);
  b.layer_norm(prefix + ".ln1", group, co);
  b.conv(prefix + ".conv2", group, co, co, 3);
  b.layer_norm(prefix + ".ln2", group, co);
  if (ci != co || stride != 1) b.conv(prefix + ".short", group, co, ci, 1);
}

}  // namespace

void ForecastModel::build_parameters(std::uint64_t seed) {
  const int h = config_.hidden_dim;
  ParamBuilder b(store_, seed);

  const ParamGroup ag = ParamGroup::agent_encoder;
  build_res_block(b, ag, "agent.g1.b1", 3, h, 2);
  build_res_block(b, ag, "agent.g1.b2", h, h, 1);
  build_res_block(b, ag, "agent.g2.b1", h, h, 2);
  build_res_block(b, ag, "agent.g2.b2", h, h, 1);
  build_res_block(b, ag, "agent.g3.b1", h, h, 2);
  build_res_block(b, ag, "agent.g3.b2", h, h, 1);
  for (int s = 1; s <= 3; ++s) b.conv("agent.fpn.lat" + std::to_string(s), ag, h, h, 1);
  build_res_block(b, ag, "agent.fpn.res", h, h, 1);

  const ParamGroup mp = ParamGroup::map_encoder;
  for (int blk = 0; blk < config_.n_laneconv_blocks; ++blk) {
    const std::string p = "map.b" + std::to_string(blk);
    const int fin = blk == 0 ? kNodeFeatureDim : h;
    b.weight(p + ".w0", mp, {fin, h}, fin);
    b.weight(p + ".wleft", mp, {fin, h}, fin);
    b.weight(p + ".wright", mp, {fin, h}, fin);
    for (int k : config_.dilations) {
      b.weight(p + ".wpre" + std::to_string(k), mp, {fin, h}, fin);
      b.weight(p + ".wsuc" + std::to_string(k), mp, {fin, h}, fin);
    }
    b.layer_norm(p + ".ln1", mp, h);
    b.linear(p + ".lin", mp, h, h);
    b.layer_norm(p + ".ln2", mp, h);
    if (fin != h) b.linear(p + ".short", mp, fin, h);
  }

  const ParamGroup in = ParamGroup::interaction;
  for (const char* stage : {"m2a", "a2a"}) {
    const std::string p = std::string("int.") + stage;
    b.weight(p + ".wq", in, {h, h}, h);
    b.weight(p + ".w1", in, {3 * h, h}, 3 * h);
    b.weight(p + ".w2", in, {h, h}, h);
    b.layer_norm(p + ".phi", in, h);
    b.linear(p + ".delta", in, 2, h);
    b.layer_norm(p + ".delta.ln", in, h);
  }

  const ParamGroup dc = ParamGroup::decoder;
  for (int k = 0; k < config_.k_modes; ++k) {
    const std::string p = "dec.mode" + std::to_string(k);
    b.linear(p + ".l1", dc, h, h);
    b.linear(p + ".l2", dc, h, 2 * config_.horizon);
  }
  b.linear("dec.cls.l1", dc, h, h);
  b.linear("dec.cls.l2", dc, h, config_.k_modes);

  const ParamGroup ss = ParamGroup::pretext_head;
  switch (config_.pretext) {
    case Pretext::none:
      break;
    case Pretext::mask:
      b.linear("ss.mask.l1", ss, h, h);
      b.linear("ss.mask.l2", ss, h, kNodeFeatureDim);
      break;
    case Pretext::d2i:
      b.linear("ss.d2i.l1", ss, h, h);
      b.linear("ss.d2i.l2", ss, h, 1);
      break;
    case Pretext::maneuver:
      b.linear("ss.man.l1", ss, h, h);
      b.linear("ss.man.l2", ss, h, kNumManeuvers);
      break;
    case Pretext::goal:
      b.linear("ss.goal.delta", ss, 2, h);
      b.layer_norm("ss.goal.delta.ln", ss, h);
      b.linear("ss.goal.l1", ss, 3 * h, h);
      b.linear("ss.goal.l2", ss, h, 1);
      break;
  }
}

ForecastModel::ForecastModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  build_parameters(seed);
}

ForecastModel::ForecastModel(ModelConfig config, ParameterStore store)
    : config_(std::move(config)), store_(std::move(store)) {
  config_.validate();
}

// ---- forward pieces --------------------------------------------------------------

namespace {

ad::Var res_block(GraphParams& P, const std::string& prefix, ad::Var x, int stride,
                  bool has_shortcut) {
  ad::Var h = ad::conv1d(x, P(prefix + ".conv1.w"), P(prefix + ".conv1.b"), stride, 1);
  h = ad::relu(ad::layer_norm(h, P(prefix + ".ln1.g"), P(prefix + ".ln1.b")));
  h = ad::conv1d(h, P(prefix + ".conv2.w"), P(prefix + ".conv2.b"), 1, 1);
  h = ad::layer_norm(h, P(prefix + ".ln2.g"), P(prefix + ".ln2.b"));
  ad::Var shortcut = x;
  if (has_shortcut)
    shortcut = ad::conv1d(x, P(prefix + ".short.w"), P(prefix + ".short.b"), stride, 0);
  return ad::relu(ad::add(h, shortcut));
}

ad::Var head_mlp(GraphParams& P, const std::string& prefix, ad::Var x) {
  ad::Var h = ad::relu(ad::linear(x, P(prefix + ".l1.w"), P(prefix + ".l1.b")));
  return ad::linear(h, P(prefix + ".l2.w"), P(prefix + ".l2.b"));
}

std::vector<double> flatten_diffs(const std::vector<Vec2>& a_minus_b) {
  std::vector<double> out;
  out.reserve(a_minus_b.size() * 2);
  for (const Vec2& v : a_minus_b) {
    out.push_back(v.x);
    out.push_back(v.y);
  }
  return out;
}

}  // namespace

ad::Var ForecastModel::agent_encode(ad::Graph& g, GraphParams& P,
                                    const std::vector<AgentTrack>& tracks) const {
  const int n = static_cast<int>(tracks.size());
  const int l = config_.history_len;
  if (n < 1) throw std::invalid_argument("agent_encode: no agents");

  // input channels (dx * mask, dy * mask, mask); short histories stay zero
  std::vector<double> input(static_cast<std::size_t>(n) * 3 * l, 0.0);
  for (int i = 0; i < n; ++i) {
    const AgentTrack& t = tracks[static_cast<std::size_t>(i)];
    const int steps = t.history_len();
    for (int s = 0; s < l; ++s) {
      const int src = steps - l + s;  // latest step aligned to the end
      if (src < 0 || !t.observed_mask[static_cast<std::size_t>(src)]) continue;
      const Vec2 d = t.past_displacements[static_cast<std::size_t>(src)];
      input[(static_cast<std::size_t>(i) * 3 + 0) * l + s] = d.x;
      input[(static_cast<std::size_t>(i) * 3 + 1) * l + s] = d.y;
      input[(static_cast<std::size_t>(i) * 3 + 2) * l + s] = 1.0;
    }
  }
  ad::Var x = g.constant({n, 3, l}, std::move(input));

  ad::Var c1 = res_block(P, "agent.g1.b1", x, 2, true);
  c1 = res_block(P, "agent.g1.b2", c1, 1, false);
  ad::Var c2 = res_block(P, "agent.g2.b1", c1, 2, true);
  c2 = res_block(P, "agent.g2.b2", c2, 1, false);
  ad::Var c3 = res_block(P, "agent.g3.b1", c2, 2, true);
  c3 = res_block(P, "agent.g3.b2", c3, 1, false);

  ad::Var p3 = ad::conv1d(c3, P("agent.fpn.lat3.w"), P("agent.fpn.lat3.b"), 1, 0);
  ad::Var p2 = ad::conv1d(c2, P("agent.fpn.lat2.w"), P("agent.fpn.lat2.b"), 1, 0);
  p2 = ad::add(p2, ad::upsample_nearest(p3, p2.shape()[2]));
  ad::Var p1 = ad::conv1d(c1, P("agent.fpn.lat1.w"), P("agent.fpn.lat1.b"), 1, 0);
  p1 = ad::add(p1, ad::upsample_nearest(p2, p1.shape()[2]));

  ad::Var fused = res_block(P, "agent.fpn.res", p1, 1, false);
  return ad::select_time(fused, -1);  // feature at t = 0
}

ad::Var ForecastModel::lane_conv_forward(ad::Graph& g, GraphParams& P,
                                         const std::vector<double>& node_features,
                                         int num_nodes,
                                         const DilatedAdjacency& adj) const {
  if (static_cast<int>(node_features.size()) != num_nodes * kNodeFeatureDim)
    throw std::invalid_argument("lane_conv_forward: feature size mismatch");

  auto aggregate = [&](ad::Var input, const EdgeList& edges, ad::Var w) {
    std::vector<int> srcs, dsts;
    srcs.reserve(edges.size());
    dsts.reserve(edges.size());
    for (const auto& [gg, hh] : edges) {
      dsts.push_back(gg);
      srcs.push_back(hh);
    }
    ad::Var gathered = ad::gather_rows(input, std::move(srcs));
    ad::Var summed = ad::scatter_add_rows(gathered, std::move(dsts), input.shape()[0]);
    return ad::matmul(summed, w);
  };

  ad::Var h = g.constant({num_nodes, kNodeFeatureDim}, node_features);
  for (int blk = 0; blk < config_.n_laneconv_blocks; ++blk) {
    const std::string p = "map.b" + std::to_string(blk);
    ad::Var agg = ad::matmul(h, P(p + ".w0"));
    if (!adj.left.empty()) agg = ad::add(agg, aggregate(h, adj.left, P(p + ".wleft")));
    if (!adj.right.empty()) agg = ad::add(agg, aggregate(h, adj.right, P(p + ".wright")));
    for (int k : config_.dilations) {
      auto pre_it = adj.pre.find(k);
      auto suc_it = adj.suc.find(k);
      if (pre_it == adj.pre.end() || suc_it == adj.suc.end())
        throw std::invalid_argument("lane_conv_forward: adjacency power " +
                                    std::to_string(k) + " not precomputed");
      if (!pre_it->second.empty())
        agg = ad::add(agg, aggregate(h, pre_it->second, P(p + ".wpre" + std::to_string(k))));
      if (!suc_it->second.empty())
        agg = ad::add(agg, aggregate(h, suc_it->second, P(p + ".wsuc" + std::to_string(k))));
    }
    ad::Var y = ad::relu(ad::layer_norm(agg, P(p + ".ln1.g"), P(p + ".ln1.b")));
    y = ad::layer_norm(ad::linear(y, P(p + ".lin.w"), P(p + ".lin.b")), P(p + ".ln2.g"),
                       P(p + ".ln2.b"));
    ad::Var shortcut = h;
    if (h.shape()[1] != config_.hidden_dim)
      shortcut = ad::linear(h, P(p + ".short.w"), P(p + ".short.b"));
    h = ad::relu(ad::add(y, shortcut));
  }
  return h;
}

namespace {

// Shared attention stage: out_i = q_i . Wq + sum_j phi(concat(q_i, D_ij, n_j) W1) W2
// over the neighbor pairs (i, j) given as parallel index lists.
ad::Var attention_stage(ad::Graph& g, GraphParams& P, const std::string& prefix,
                        ad::Var queries, ad::Var neighbors_feats,
                        const std::vector<int>& query_idx,
                        const std::vector<int>& neighbor_idx,
                        const std::vector<Vec2>& deltas) {
  ad::Var base = ad::matmul(queries, P(prefix + ".wq"));
  if (query_idx.empty()) return base;

  ad::Var q_rows = ad::gather_rows(queries, query_idx);
  ad::Var n_rows = ad::gather_rows(neighbors_feats, neighbor_idx);
  ad::Var delta_in =
      g.constant({static_cast<int>(deltas.size()), 2}, flatten_diffs(deltas));
  ad::Var delta = ad::relu(ad::layer_norm(
      ad::linear(delta_in, P(prefix + ".delta.w"), P(prefix + ".delta.b")),
      P(prefix + ".delta.ln.g"), P(prefix + ".delta.ln.b")));
  ad::Var joint = ad::concat({q_rows, delta, n_rows}, 1);
  ad::Var msg = ad::matmul(joint, P(prefix + ".w1"));
  msg = ad::relu(ad::layer_norm(msg, P(prefix + ".phi.g"), P(prefix + ".phi.b")));
  msg = ad::matmul(msg, P(prefix + ".w2"));
  ad::Var pooled = ad::scatter_add_rows(msg, query_idx, queries.shape()[0]);
  return ad::add(base, pooled);
}

}  // namespace

ad::Var ForecastModel::fuse_m2a(ad::Graph& g, GraphParams& P, ad::Var agent_feats,
                                ad::Var map_feats, const std::vector<Vec2>& agent_pos,
                                const std::vector<Vec2>& node_pos) const {
  std::vector<int> qi, ni;
  std::vector<Vec2> deltas;
  for (std::size_t i = 0; i < agent_pos.size(); ++i) {
    for (std::size_t j = 0; j < node_pos.size(); ++j) {
      if (distance(agent_pos[i], node_pos[j]) > config_.m2a_radius) continue;
      qi.push_back(static_cast<int>(i));
      ni.push_back(static_cast<int>(j));
      deltas.push_back(node_pos[j] - agent_pos[i]);
    }
  }
  return attention_stage(g, P, "int.m2a", agent_feats, map_feats, qi, ni, deltas);
}

ad::Var ForecastModel::fuse_a2a(ad::Graph& g, GraphParams& P, ad::Var fused_m2a,
                                const std::vector<Vec2>& agent_pos) const {
  std::vector<int> qi, ni;
  std::vector<Vec2> deltas;
  for (std::size_t i = 0; i < agent_pos.size(); ++i) {
    for (std::size_t j = 0; j < agent_pos.size(); ++j) {
      if (i == j) continue;
      if (distance(agent_pos[i], agent_pos[j]) > config_.a2a_radius) continue;
      qi.push_back(static_cast<int>(i));
      ni.push_back(static_cast<int>(j));
      deltas.push_back(agent_pos[j] - agent_pos[i]);
    }
  }
  return attention_stage(g, P, "int.a2a", fused_m2a, fused_m2a, qi, ni, deltas);
}

DecodeOutputs ForecastModel::decode_trajectories(ad::Graph& g, GraphParams& P,
                                                 ad::Var focus_feat,
                                                 const Vec2& origin) const {
  (void)g;
  if (focus_feat.shape() != ad::Shape{1, config_.hidden_dim})
    throw std::invalid_argument("decode_trajectories: expected a [1,H] feature row");
  DecodeOutputs out;
  std::vector<double> origin_tile(static_cast<std::size_t>(config_.horizon) * 2);
  for (int t = 0; t < config_.horizon; ++t) {
    origin_tile[static_cast<std::size_t>(t) * 2] = origin.x;
    origin_tile[static_cast<std::size_t>(t) * 2 + 1] = origin.y;
  }
  for (int k = 0; k < config_.k_modes; ++k) {
    const std::string p = "dec.mode" + std::to_string(k);
    ad::Var disp = head_mlp(P, p, focus_feat);                       // [1, 2T]
    disp = ad::reshape(disp, {config_.horizon, 2});                  // per-step offsets
    ad::Var pos = ad::add_const(ad::cumsum_rows(disp), origin_tile); // positions
    out.mode_positions.push_back(pos);
  }
  ad::Var logits = head_mlp(P, "dec.cls", focus_feat);  // [1, K]
  out.score_logits = ad::reshape(logits, {config_.k_modes});
  out.scores = ad::softmax(out.score_logits);
  return out;
}

ad::Var ForecastModel::head_mask(ad::Graph& g, GraphParams& P, ad::Var map_feats,
                                 const std::vector<int>& masked_nodes) const {
  (void)g;
  if (config_.pretext != Pretext::mask)
    throw std::logic_error("head_mask: model configured with pretext " +
                           std::string(to_string(config_.pretext)));
  return head_mlp(P, "ss.mask", ad::gather_rows(map_feats, masked_nodes));
}

ad::Var ForecastModel::head_d2i(ad::Graph& g, GraphParams& P, ad::Var map_feats) const {
  (void)g;
  if (config_.pretext != Pretext::d2i)
    throw std::logic_error("head_d2i: model configured with pretext " +
                           std::string(to_string(config_.pretext)));
  ad::Var pred = head_mlp(P, "ss.d2i", map_feats);  // [M, 1]
  return ad::reshape(pred, {map_feats.shape()[0]});
}

ad::Var ForecastModel::head_maneuver(ad::Graph& g, GraphParams& P,
                                     ad::Var focus_feat) const {
  (void)g;
  if (config_.pretext != Pretext::maneuver)
    throw std::logic_error("head_maneuver: model configured with pretext " +
                           std::string(to_string(config_.pretext)));
  return ad::reshape(head_mlp(P, "ss.man", focus_feat), {kNumManeuvers});
}

ad::Var ForecastModel::head_goal(ad::Graph& g, GraphParams& P, ad::Var focus_feat,
                                 ad::Var map_feats, const std::vector<Vec2>& node_pos,
                                 const Vec2& focus_pos) const {
  if (config_.pretext != Pretext::goal)
    throw std::logic_error("head_goal: model configured with pretext " +
                           std::string(to_string(config_.pretext)));
  const int m = static_cast<int>(node_pos.size());
  std::vector<Vec2> diffs(node_pos.size());
  for (std::size_t j = 0; j < node_pos.size(); ++j) diffs[j] = node_pos[j] - focus_pos;
  ad::Var delta_in = g.constant({m, 2}, flatten_diffs(diffs));
  ad::Var delta = ad::relu(ad::layer_norm(
      ad::linear(delta_in, P("ss.goal.delta.w"), P("ss.goal.delta.b")),
      P("ss.goal.delta.ln.g"), P("ss.goal.delta.ln.b")));
  ad::Var joint = ad::concat({ad::tile_rows(focus_feat, m), map_feats, delta}, 1);
  return ad::reshape(head_mlp(P, "ss.goal", joint), {m});
}

ForecastModel::SceneForward ForecastModel::forward(ad::Graph& g, GraphParams& P,
                                                   const Scene& scene,
                                                   const DilatedAdjacency& adj) const {
  SceneForward out;
  std::vector<Vec2> agent_pos(scene.agents.size());
  for (std::size_t i = 0; i < scene.agents.size(); ++i)
    agent_pos[i] = scene.agents[i].current_position();

  out.enc.agent_feats = agent_encode(g, P, scene.agents);
  out.enc.map_feats =
      lane_conv_forward(g, P, scene.graph.node_features, scene.graph.num_nodes(), adj);
  out.enc.fused_m2a = fuse_m2a(g, P, out.enc.agent_feats, out.enc.map_feats, agent_pos,
                               scene.graph.node_positions);
  out.enc.fused_a2a = fuse_a2a(g, P, out.enc.fused_m2a, agent_pos);
  out.focus_feat = ad::gather_rows(out.enc.fused_a2a, {scene.focus_agent});
  out.dec = decode_trajectories(g, P, out.focus_feat,
                                agent_pos[static_cast<std::size_t>(scene.focus_agent)]);
  return out;
}

Forecast forecast_from_decode(const DecodeOutputs& dec) {
  Forecast f;
  f.scores = dec.scores.value();
  for (const ad::Var& mode : dec.mode_positions) {
    const auto& v = mode.value();
    std::vector<Vec2> pts(v.size() / 2);
    for (std::size_t t = 0; t < pts.size(); ++t) pts[t] = {v[t * 2], v[t * 2 + 1]};
    f.modes.push_back(std::move(pts));
  }
  return f;
}

Forecast ForecastModel::predict(const Scene& scene, const DilatedAdjacency& adj) const {
  ad::Graph g;
  // inference-only forward; params bound without flushing gradients
  GraphParams P(g, const_cast<ParameterStore&>(store_));
  return forecast_from_decode(forward(g, P, scene, adj).dec);
}

Forecast ForecastModel::predict(const Scene& scene) const {
  return predict(scene, adjacency_powers(scene.graph, config_.dilations));
}

}  // namespace ssllanes
