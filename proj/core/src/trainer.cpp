#include "ssllanes/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>

#include "ssllanes/pseudolabels.hpp"

namespace ssllanes {

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (lr_decay_step > steps && steps > 0)
    throw std::invalid_argument("lr_decay_step must be <= steps");
  if (mask_ratio < 0.0 || mask_ratio > 1.0)
    throw std::invalid_argument("mask_ratio must be in [0, 1]");
  for (double g : augmentation_gammas)
    if (g < 0.0 || g >= 2.0 * M_PI)
      throw std::invalid_argument("augmentation gammas must lie in [0, 2pi)");
}

std::vector<double> TrainConfig::effective_gammas() const {
  if (!augmentation_gammas.empty()) return augmentation_gammas;
  std::vector<double> out;
  for (int deg = 0; deg < 360; deg += 30) out.push_back(deg * M_PI / 180.0);
  return out;
}

double lr_at_step(const TrainConfig& config, int step) {
  return step < config.lr_decay_step ? config.lr_initial : config.lr_after;
}

namespace {

struct SceneCache {
  DilatedAdjacency adj;
  std::optional<DistanceLabels> d2i;
  std::optional<GoalLabels> goal;
  int maneuver_label = -1;
};

}  // namespace

TrainOutput train(const std::vector<Scene>& dataset, const ModelConfig& model_config,
                  const TrainConfig& train_config) {
  model_config.validate();
  train_config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  for (const Scene& s : dataset)
    if (!s.focus().has_future())
      throw std::invalid_argument("train: dataset contains a scene without a future");

  ForecastModel model(model_config, train_config.seed);
  if (!train_config.warm_start_path.empty())
    warm_start_map_encoder(model.store(), train_config.warm_start_path);

  // per-scene precomputation; maneuver clusters are fitted once on the dataset
  std::vector<SceneCache> cache(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    cache[i].adj = adjacency_powers(dataset[i].graph, model_config.dilations);

  if (model_config.pretext == Pretext::d2i) {
    int usable = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      try {
        cache[i].d2i = bfs_distance_to_intersection(dataset[i].graph);
        usable++;
      } catch (const std::runtime_error&) {
        // scene has no intersection nodes; it trains without the pretext term
      }
    }
    if (usable == 0)
      throw std::invalid_argument(
          "train: pretext d2i requires intersection nodes somewhere in the dataset");
  }
  if (model_config.pretext == Pretext::goal) {
    int usable = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      GoalLabels labels = label_goal_candidates(dataset[i], 2.0);
      if (labels.has_positive) {
        cache[i].goal = std::move(labels);
        usable++;
      }
    }
    if (usable == 0)
      throw std::invalid_argument(
          "train: pretext goal found no scene with a positive goal candidate");
  }
  if (model_config.pretext == Pretext::maneuver) {
    ManeuverLabels labels = label_maneuvers(dataset, train_config.seed);
    int usable = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      cache[i].maneuver_label = labels.labels[i];
      usable += labels.labels[i] >= 0 ? 1 : 0;
    }
    if (usable == 0)
      throw std::invalid_argument("train: pretext maneuver found no labelable scene");
  }

  std::mt19937_64 rng(train_config.seed ^ 0xD1B54A32D192ED03ull);
  const std::vector<double> gammas = train_config.effective_gammas();

  TrainOutput out{std::move(model), {}};
  ParameterStore& store = out.model.store();

  for (int step = 0; step < train_config.steps; ++step) {
    const double lr = lr_at_step(train_config, step);
    store.zero_grad();

    TrainLogRow row;
    row.step = step;
    row.lr = lr;
    int ss_count = 0;

    for (int b = 0; b < train_config.batch_size; ++b) {
      const std::size_t idx = std::uniform_int_distribution<std::size_t>(
          0, dataset.size() - 1)(rng);
      const SceneCache& sc = cache[idx];

      Scene rotated;
      const Scene* scene = &dataset[idx];
      if (train_config.augment) {
        const double gamma = gammas[std::uniform_int_distribution<std::size_t>(
            0, gammas.size() - 1)(rng)];
        rotated = rotate_scene(*scene, gamma);
        scene = &rotated;
      }

      ad::Graph g;
      GraphParams params(g, store);
      auto fwd = out.model.forward(g, params, *scene, sc.adj);
      auto sup = supervised_losses(g, fwd.dec, scene->focus().future_positions);

      ad::Var ss;
      switch (model_config.pretext) {
        case Pretext::none:
          break;
        case Pretext::mask: {
          auto [perturbed, spec] =
              mask_lanes(scene->graph, train_config.mask_ratio, rng());
          if (!spec.masked_nodes.empty()) {
            ad::Var masked_map = out.model.lane_conv_forward(
                g, params, perturbed, scene->graph.num_nodes(), sc.adj);
            ss = loss_mask(g, out.model.head_mask(g, params, masked_map,
                                                  spec.masked_nodes), spec);
          }
          break;
        }
        case Pretext::d2i:
          if (sc.d2i)
            ss = loss_d2i(g, out.model.head_d2i(g, params, fwd.enc.map_feats), *sc.d2i);
          break;
        case Pretext::maneuver:
          if (sc.maneuver_label >= 0)
            ss = loss_maneuver(out.model.head_maneuver(g, params, fwd.focus_feat),
                               sc.maneuver_label);
          break;
        case Pretext::goal:
          if (sc.goal)
            ss = loss_goal(out.model.head_goal(g, params, fwd.focus_feat,
                                               fwd.enc.map_feats,
                                               scene->graph.node_positions,
                                               scene->focus().current_position()),
                           *sc.goal);
          break;
      }

      auto total = total_loss(g, sup, ss, train_config.alpha1, train_config.alpha2);
      g.backward(total.value, 1.0 / train_config.batch_size);
      params.flush();

      row.total += total.report.total / train_config.batch_size;
      row.cls += total.report.components.at("cls") / train_config.batch_size;
      row.reg += total.report.components.at("reg") / train_config.batch_size;
      row.terminal += total.report.components.at("terminal") / train_config.batch_size;
      if (ss.defined()) {
        row.ss += total.report.components.at("ss");
        ss_count++;
      }
    }
    if (ss_count > 0) row.ss /= ss_count;

    if (!std::isfinite(row.total))
      throw std::runtime_error(
          "train: non-finite loss at step " + std::to_string(step) + " (cls=" +
          std::to_string(row.cls) + ", reg=" + std::to_string(row.reg) + ", terminal=" +
          std::to_string(row.terminal) + ", ss=" + std::to_string(row.ss) + ")");

    adam_step(store, lr);
    out.log.push_back(row);

    if (train_config.progress_every > 0 && step % train_config.progress_every == 0) {
      std::printf("step %6d  lr %.1e  total %.4f  cls %.4f  reg %.4f  term %.4f  ss %.4f\n",
                  step, lr, row.total, row.cls, row.reg, row.terminal, row.ss);
      std::fflush(stdout);
    }
  }
  return out;
}

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open training log for writing: " + path);
  os << "step,total,cls,reg,terminal,ss,lr\n";
  for (const auto& row : log)
    os << row.step << "," << row.total << "," << row.cls << "," << row.reg << ","
       << row.terminal << "," << row.ss << "," << row.lr << "\n";
}

}  // namespace ssllanes
