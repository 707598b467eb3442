#include "ssllanes/param_store.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ssllanes {

using nlohmann::json;

const char* to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::agent_encoder: return "agent_encoder";
    case ParamGroup::map_encoder: return "map_encoder";
    case ParamGroup::interaction: return "interaction";
    case ParamGroup::decoder: return "decoder";
    case ParamGroup::pretext_head: return "pretext_head";
  }
  return "unknown";
}

ParamGroup param_group_from_string(const std::string& name) {
  if (name == "agent_encoder") return ParamGroup::agent_encoder;
  if (name == "map_encoder") return ParamGroup::map_encoder;
  if (name == "interaction") return ParamGroup::interaction;
  if (name == "decoder") return ParamGroup::decoder;
  if (name == "pretext_head") return ParamGroup::pretext_head;
  throw std::invalid_argument("unknown parameter group: " + name);
}

Param& ParameterStore::add(std::string name, ParamGroup group, ad::Shape shape,
                           std::vector<double> values) {
  if (index_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  if (ad::numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("parameter " + name + ": value count does not match shape");
  auto p = std::make_unique<Param>();
  p->name = std::move(name);
  p->group = group;
  p->shape = std::move(shape);
  p->value = std::move(values);
  p->grad.assign(p->value.size(), 0.0);
  p->adam_m.assign(p->value.size(), 0.0);
  p->adam_v.assign(p->value.size(), 0.0);
  index_[p->name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

bool ParameterStore::contains(const std::string& name) const {
  return index_.count(name) > 0;
}

Param& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
  return *params_[it->second];
}

const Param& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
  return *params_[it->second];
}

std::vector<Param*> ParameterStore::params() {
  std::vector<Param*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParameterStore::params() const {
  std::vector<const Param*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::int64_t ParameterStore::total_values() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += static_cast<std::int64_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_)
    std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

void adam_step(ParameterStore& store, double lr, double beta1, double beta2,
               double eps) {
  store.adam_t_ += 1;
  const double t = static_cast<double>(store.adam_t_);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (auto& p : store.params_) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      p->adam_m[i] = beta1 * p->adam_m[i] + (1.0 - beta1) * g;
      p->adam_v[i] = beta2 * p->adam_v[i] + (1.0 - beta2) * g * g;
      const double mhat = p->adam_m[i] / bc1;
      const double vhat = p->adam_v[i] / bc2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

ad::Var GraphParams::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Param& p = store_->at(name);
  ad::Var v = graph_->leaf(p.shape, p.value, true);
  bound_.emplace(name, v);
  order_.emplace_back(&p, v);
  return v;
}

void GraphParams::flush() {
  for (auto& [param, var] : order_) {
    const auto& g = var.grad();
    if (g.empty()) continue;  // backward never ran through this leaf
    for (std::size_t i = 0; i < g.size(); ++i) param->grad[i] += g[i];
  }
}

// ---- checkpoint io -----------------------------------------------------------

namespace {

constexpr const char* kMagic = "SSLLANES-CKPT 1";

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::string& path,
                     const std::string& config_json) {
  json manifest;
  manifest["params"] = json::array();
  for (const Param* p : store.params()) {
    manifest["params"].push_back(
        {{"name", p->name}, {"group", to_string(p->group)}, {"shape", p->shape}});
  }
  manifest["config"] = config_json.empty() ? json::object() : json::parse(config_json);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os << kMagic << "\n" << manifest.dump() << "\n";
  for (const Param* p : store.params()) {
    for (double v : p->value) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      const unsigned char bytes[4] = {
          static_cast<unsigned char>(bits & 0xff),
          static_cast<unsigned char>((bits >> 8) & 0xff),
          static_cast<unsigned char>((bits >> 16) & 0xff),
          static_cast<unsigned char>((bits >> 24) & 0xff)};
      os.write(reinterpret_cast<const char*>(bytes), 4);
    }
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic, manifest_line;
  if (!std::getline(is, magic) || magic != kMagic)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (!std::getline(is, manifest_line))
    throw std::runtime_error("checkpoint missing manifest: " + path);
  json manifest;
  try {
    manifest = json::parse(manifest_line);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint manifest parse error: " + std::string(e.what()));
  }

  LoadedCheckpoint out;
  out.config_json = manifest.value("config", json::object()).dump();
  for (const auto& entry : manifest.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const ParamGroup group = param_group_from_string(entry.at("group").get<std::string>());
    const ad::Shape shape = entry.at("shape").get<ad::Shape>();
    const std::int64_t count = ad::numel(shape);
    std::vector<double> values(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
      unsigned char bytes[4];
      if (!is.read(reinterpret_cast<char*>(bytes), 4))
        throw std::runtime_error("checkpoint payload truncated at parameter " + name);
      const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                                 (static_cast<std::uint32_t>(bytes[1]) << 8) |
                                 (static_cast<std::uint32_t>(bytes[2]) << 16) |
                                 (static_cast<std::uint32_t>(bytes[3]) << 24);
      float f;
      std::memcpy(&f, &bits, sizeof(f));
      values[static_cast<std::size_t>(i)] = static_cast<double>(f);
    }
    out.store.add(name, group, shape, std::move(values));
  }
  return out;
}

void warm_start_map_encoder(ParameterStore& store, const std::string& checkpoint_path) {
  LoadedCheckpoint src = load_checkpoint(checkpoint_path);
  for (const Param* p : src.store.params()) {
    if (p->group != ParamGroup::map_encoder) continue;
    if (!store.contains(p->name))
      throw std::runtime_error("warm start: target has no parameter " + p->name);
    Param& dst = store.at(p->name);
    if (dst.shape != p->shape)
      throw std::runtime_error("warm start: shape mismatch for " + p->name + " (" +
                               ad::shape_str(dst.shape) + " vs " + ad::shape_str(p->shape) + ")");
    dst.value = p->value;
  }
}

}  // namespace ssllanes
