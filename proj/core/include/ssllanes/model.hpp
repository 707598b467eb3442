// The forecasting network: temporal-conv agent encoder with a feature pyramid,
// LaneConv map encoder over dilated typed adjacency, map-to-agent and
// agent-to-agent fusion, a multi-modal trajectory decoder, and one pretext
// head per self-supervised task.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssllanes/autodiff.hpp"
#include "ssllanes/param_store.hpp"
#include "ssllanes/scenegraph.hpp"

namespace ssllanes {

enum class Pretext { none, mask, d2i, maneuver, goal };
const char* to_string(Pretext p);
Pretext pretext_from_string(const std::string& name);

struct ModelConfig {
  int hidden_dim = 32;                          // 128 reproduces the full-size setup
  std::vector<int> dilations = {1, 2, 4, 8, 16, 32};
  int n_laneconv_blocks = 2;
  double m2a_radius = 12.0;
  double a2a_radius = 100.0;
  int k_modes = 6;
  int horizon = 30;      // T
  int history_len = 20;  // L
  Pretext pretext = Pretext::none;

  void validate() const;
  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& json_text);
};

struct Forecast {
  std::vector<std::vector<Vec2>> modes;  // K x T positions
  std::vector<double> scores;            // K, softmax normalized
};

struct EncoderOutputs {
  ad::Var agent_feats;  // N x H
  ad::Var map_feats;    // M x H
  ad::Var fused_m2a;    // N x H
  ad::Var fused_a2a;    // N x H
};

struct DecodeOutputs {
  std::vector<ad::Var> mode_positions;  // K entries of [T, 2]
  ad::Var score_logits;                 // [K]
  ad::Var scores;                       // [K]
};

class ForecastModel {
 public:
  ForecastModel(ModelConfig config, std::uint64_t seed);
  ForecastModel(ModelConfig config, ParameterStore store);  // from checkpoint

  const ModelConfig& config() const { return config_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  ad::Var agent_encode(ad::Graph& g, GraphParams& params,
                       const std::vector<AgentTrack>& tracks) const;
  ad::Var lane_conv_forward(ad::Graph& g, GraphParams& params,
                            const std::vector<double>& node_features, int num_nodes,
                            const DilatedAdjacency& adj) const;
  ad::Var fuse_m2a(ad::Graph& g, GraphParams& params, ad::Var agent_feats,
                   ad::Var map_feats, const std::vector<Vec2>& agent_pos,
                   const std::vector<Vec2>& node_pos) const;
  ad::Var fuse_a2a(ad::Graph& g, GraphParams& params, ad::Var fused_m2a,
                   const std::vector<Vec2>& agent_pos) const;
  DecodeOutputs decode_trajectories(ad::Graph& g, GraphParams& params,
                                    ad::Var focus_feat, const Vec2& origin) const;

  // pretext heads; each throws unless the matching pretext is configured
  ad::Var head_mask(ad::Graph& g, GraphParams& params, ad::Var map_feats,
                    const std::vector<int>& masked_nodes) const;
  ad::Var head_d2i(ad::Graph& g, GraphParams& params, ad::Var map_feats) const;
  ad::Var head_maneuver(ad::Graph& g, GraphParams& params, ad::Var focus_feat) const;
  ad::Var head_goal(ad::Graph& g, GraphParams& params, ad::Var focus_feat,
                    ad::Var map_feats, const std::vector<Vec2>& node_pos,
                    const Vec2& focus_pos) const;

  struct SceneForward {
    EncoderOutputs enc;
    DecodeOutputs dec;
    ad::Var focus_feat;  // [1, H] row of fused_a2a
  };
  SceneForward forward(ad::Graph& g, GraphParams& params, const Scene& scene,
                       const DilatedAdjacency& adj) const;

  // Convenience inference: runs one forward on a private graph.
  Forecast predict(const Scene& scene) const;
  Forecast predict(const Scene& scene, const DilatedAdjacency& adj) const;

 private:
  void build_parameters(std::uint64_t seed);

  ModelConfig config_;
  ParameterStore store_;
};

Forecast forecast_from_decode(const DecodeOutputs& dec);

}  // namespace ssllanes
