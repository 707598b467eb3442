#include "ssllanes/suite.hpp"

#include <algorithm>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ssllanes/maneuver.hpp"

namespace ssllanes {

namespace {

void require_tags(const std::vector<Scene>& scenes, const char* which) {
  std::vector<std::string> missing;
  for (const char* tag : {"region", "maneuver"}) {
    bool ok = !scenes.empty();
    for (const Scene& s : scenes) ok = ok && s.tags.count(tag) > 0;
    if (!ok) missing.push_back(tag);
  }
  if (!missing.empty()) {
    std::string msg = std::string("generalization_suite: ") + which +
                      " scenes missing required tags:";
    for (const auto& t : missing) msg += " " + t;
    throw std::invalid_argument(msg);
  }
}

bool is_hard_maneuver(const Scene& s) {
  const std::string& m = s.tags.at("maneuver");
  return m == to_string(Maneuver::turn_left) || m == to_string(Maneuver::turn_right) ||
         m == to_string(Maneuver::lane_change);
}

std::vector<Scene> filter(const std::vector<Scene>& scenes,
                          const std::function<bool(const Scene&)>& keep) {
  std::vector<Scene> out;
  for (const Scene& s : scenes)
    if (keep(s)) out.push_back(s);
  return out;
}

std::vector<Scene> sample_fraction(const std::vector<Scene>& scenes, double fraction,
                                   std::uint64_t seed) {
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t keep = std::min(order.size(), static_cast<std::size_t>(std::lround(
      fraction * static_cast<double>(scenes.size()))));
  order.resize(keep);
  std::sort(order.begin(), order.end());  // keep the original scene order
  std::vector<Scene> out;
  out.reserve(keep);
  for (std::size_t idx : order) out.push_back(scenes[idx]);
  return out;
}

struct NamedModel {
  std::string name;
  ModelConfig config;
  ForecastModel model;
};

std::vector<NamedModel> load_models(
    const std::vector<std::pair<std::string, std::string>>& checkpoints) {
  std::vector<NamedModel> out;
  for (const auto& [name, path] : checkpoints) {
    LoadedCheckpoint ckpt = load_checkpoint(path);
    ModelConfig cfg = ModelConfig::from_json_string(ckpt.config_json);
    out.push_back({name, cfg, ForecastModel(cfg, std::move(ckpt.store))});
  }
  return out;
}

}  // namespace

std::vector<SuiteRow> generalization_suite(
    const std::vector<std::pair<std::string, std::string>>& checkpoints,
    const std::vector<Scene>& train_scenes, const std::vector<Scene>& val_scenes,
    const SuiteConfig& config) {
  if (checkpoints.empty())
    throw std::invalid_argument("generalization_suite: no checkpoints given");
  require_tags(train_scenes, "train");
  require_tags(val_scenes, "val");

  std::vector<NamedModel> models = load_models(checkpoints);
  std::vector<SuiteRow> rows;

  auto retrain_and_eval = [&](const std::string& setting,
                              const std::vector<Scene>& train_set,
                              const std::vector<Scene>& eval_set, std::uint64_t salt) {
    if (train_set.empty())
      throw std::invalid_argument("generalization_suite: setting " + setting +
                                  " has an empty training set");
    if (eval_set.empty())
      throw std::invalid_argument("generalization_suite: setting " + setting +
                                  " has an empty evaluation set");
    for (const auto& nm : models) {
      TrainConfig tcfg = config.retrain;
      tcfg.seed = config.seed ^ salt;
      tcfg.progress_every = 0;
      TrainOutput out = ssllanes::train(train_set, nm.config, tcfg);
      rows.push_back({setting, nm.name, evaluate_model(out.model, eval_set, config.eval_k)});
    }
  };
  auto eval_checkpoints = [&](const std::string& setting,
                              const std::vector<Scene>& eval_set) {
    if (eval_set.empty())
      throw std::invalid_argument("generalization_suite: setting " + setting +
                                  " has an empty evaluation set");
    for (const auto& nm : models)
      rows.push_back({setting, nm.name, evaluate_model(nm.model, eval_set, config.eval_k)});
  };

  // 1: reduced training data
  retrain_and_eval("train_fraction_" + std::to_string(config.train_fraction).substr(0, 4),
                   sample_fraction(train_scenes, config.train_fraction, config.seed ^ 0x11),
                   val_scenes, kSuiteSaltFraction);

  // 2: cross-region transfer (all of region A, a sliver of region B; eval on B)
  {
    auto region_a =
        filter(train_scenes, [](const Scene& s) { return s.tags.at("region") == "A"; });
    auto region_b =
        filter(train_scenes, [](const Scene& s) { return s.tags.at("region") == "B"; });
    auto val_b = filter(val_scenes, [](const Scene& s) { return s.tags.at("region") == "B"; });
    auto b_slice = sample_fraction(region_b, config.minor_region_fraction, config.seed ^ 0x22);
    std::vector<Scene> mixed = region_a;
    mixed.insert(mixed.end(), b_slice.begin(), b_slice.end());
    retrain_and_eval("cross_region", mixed, val_b, kSuiteSaltCrossRegion);
  }

  // 3: hard maneuvers only
  eval_checkpoints("hard_maneuvers", filter(val_scenes, is_hard_maneuver));

  // 4: straight-biased training, evaluated on hard maneuvers
  {
    std::vector<Scene> biased = train_scenes;
    const int extra = static_cast<int>(std::lround(config.straight_oversample)) - 1;
    for (const Scene& s : train_scenes) {
      if (s.tags.at("maneuver") != to_string(Maneuver::maintain_speed)) continue;
      for (int r = 0; r < extra; ++r) biased.push_back(s);
    }
    retrain_and_eval("straight_oversample", biased, filter(val_scenes, is_hard_maneuver),
                     kSuiteSaltOversample);
  }

  // 5, 6: noise at increasing strengths
  for (double p : config.noise_ps) {
    std::ostringstream name;
    name << "noise_p" << p;
    eval_checkpoints(name.str(), inject_noise(val_scenes, p, config.noise_sigma2,
                                              config.seed ^ 0x55, NoiseTarget::both));
  }
  return rows;
}

std::string suite_table(const std::vector<SuiteRow>& rows) {
  std::ostringstream os;
  os << std::left;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << std::setw(26) << "setting" << std::setw(14) << "model" << std::setw(10)
     << "minADE" << std::setw(10) << "minFDE" << std::setw(8) << "MR" << std::setw(12)
     << "brier-FDE" << "n\n";
  for (const auto& r : rows)
    os << std::setw(26) << r.setting << std::setw(14) << r.model_name << std::setw(10)
       << r.report.min_ade << std::setw(10) << r.report.min_fde << std::setw(8)
       << r.report.miss_rate << std::setw(12) << r.report.brier_min_fde
       << r.report.n_scenes << "\n";
  return os.str();
}

std::string suite_csv(const std::vector<SuiteRow>& rows) {
  std::ostringstream os;
  os << "setting,model,k,min_ade,min_fde,miss_rate,brier_min_fde,n_scenes\n";
  for (const auto& r : rows)
    os << r.setting << "," << r.model_name << "," << r.report.k << "," << r.report.min_ade
       << "," << r.report.min_fde << "," << r.report.miss_rate << ","
       << r.report.brier_min_fde << "," << r.report.n_scenes << "\n";
  return os.str();
}

}  // namespace ssllanes
