// Named, grouped learnable parameters plus the Adam optimizer state, and the
// checkpoint file format (text manifest + little-endian float32 payload).
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ssllanes/autodiff.hpp"

namespace ssllanes {

enum class ParamGroup { agent_encoder, map_encoder, interaction, decoder, pretext_head };

const char* to_string(ParamGroup group);
ParamGroup param_group_from_string(const std::string& name);

struct Param {
  std::string name;
  ParamGroup group;
  ad::Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

class ParameterStore {
 public:
  Param& add(std::string name, ParamGroup group, ad::Shape shape,
             std::vector<double> values);
  bool contains(const std::string& name) const;
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  // Creation order; also the checkpoint manifest order.
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::size_t size() const { return params_.size(); }
  std::int64_t total_values() const;

  void zero_grad();

  int adam_steps() const { return adam_t_; }
  friend void adam_step(ParameterStore&, double, double, double, double);

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, std::size_t> index_;
  int adam_t_ = 0;
};

// One Adam update from the gradients currently held in the store. Moments are
// persistent; bias correction uses the store's step counter.
void adam_step(ParameterStore& store, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Binds store parameters into a graph as differentiable leaves. flush() adds
// the leaf gradients back into the store after Graph::backward.
class GraphParams {
 public:
  GraphParams(ad::Graph& graph, ParameterStore& store)
      : graph_(&graph), store_(&store) {}
  ad::Var operator()(const std::string& name);
  void flush();

 private:
  ad::Graph* graph_;
  ParameterStore* store_;
  std::map<std::string, ad::Var> bound_;
  std::vector<std::pair<Param*, ad::Var>> order_;
};

// Checkpoint io. Values are narrowed to float32 on save and widened on load,
// so save -> load -> save is byte-identical.
void save_checkpoint(const ParameterStore& store, const std::string& path,
                     const std::string& config_json = "{}");

struct LoadedCheckpoint {
  ParameterStore store;
  std::string config_json;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// Replaces only the map_encoder group from the checkpoint at `path`; every
// other group is untouched. Throws on a missing name or shape mismatch,
// naming the parameter.
void warm_start_map_encoder(ParameterStore& store, const std::string& checkpoint_path);

}  // namespace ssllanes
