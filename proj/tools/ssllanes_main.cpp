// ssllanes: synthetic lane-graph motion forecasting with self-supervised
// pretext tasks. Subcommands: gen, labels, train, eval, analyze, plot.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssllanes/evalsuite.hpp"
#include "ssllanes/losses.hpp"
#include "ssllanes/model.hpp"
#include "ssllanes/pseudolabels.hpp"
#include "ssllanes/run_manifest.hpp"
#include "ssllanes/scene_io.hpp"
#include "ssllanes/suite.hpp"
#include "ssllanes/svg_plot.hpp"
#include "ssllanes/synthgen.hpp"
#include "ssllanes/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ssllanes;

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::map<std::string, double> parse_mix(const std::string& text) {
  std::map<std::string, double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("mix", "expected key=weight pairs, got '" + item + "'");
    out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
  }
  return out;
}

std::string scene_id(const Scene& scene, std::size_t index) {
  auto it = scene.tags.find("id");
  return it != scene.tags.end() ? it->second : std::to_string(index);
}

std::string sibling_path(const std::string& base, const std::string& suffix) {
  const fs::path p(base);
  fs::path out = p.parent_path() / (p.stem().string() + suffix + p.extension().string());
  return out.string();
}

void finish_manifest(RunManifest manifest, const Stopwatch& watch,
                     const std::string& path) {
  manifest.wall_clock_sec = watch.seconds();
  write_run_manifest(manifest, path);
}

ModelConfig config_for_dataset(const std::vector<Scene>& scenes, int hidden, int modes,
                               Pretext pretext) {
  if (scenes.empty()) throw std::runtime_error("dataset is empty");
  ModelConfig cfg;
  cfg.hidden_dim = hidden;
  cfg.k_modes = modes;
  cfg.pretext = pretext;
  cfg.history_len = scenes.front().focus().history_len();
  cfg.horizon = static_cast<int>(scenes.front().focus().future_positions.size());
  if (cfg.horizon == 0)
    throw std::runtime_error("training scenes carry no ground-truth futures");
  return cfg;
}

// ---- gen -------------------------------------------------------------------

struct GenOptions {
  std::uint64_t seed = 0;
  int n = 1000;
  std::string out;
  std::string config_path;
  std::string maneuver_mix;
  std::string region_mix;
  std::string agents = "1:5";
  double spacing = 4.0;
  double noise = 0.01;
  double val_fraction = 0.2;
  int history = 20;
  int horizon = 30;
};

WorldConfig world_config_from(const GenOptions& opt) {
  WorldConfig cfg;
  if (!opt.config_path.empty()) {
    std::ifstream is(opt.config_path);
    if (!is) throw std::runtime_error("cannot open config: " + opt.config_path);
    json j = json::parse(is);
    if (j.contains("maneuver_mix"))
      for (const auto& [k, v] : j["maneuver_mix"].items())
        cfg.maneuver_mix[maneuver_from_string(k)] = v.get<double>();
    if (j.contains("region_mix")) {
      cfg.region_mix.clear();
      for (const auto& [k, v] : j["region_mix"].items()) cfg.region_mix[k] = v.get<double>();
    }
    cfg.node_spacing = j.value("node_spacing", cfg.node_spacing);
    cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
    cfg.history_len = j.value("history_len", cfg.history_len);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
    if (j.contains("agents_per_scene"))
      cfg.agents_per_scene = {j["agents_per_scene"][0].get<int>(),
                              j["agents_per_scene"][1].get<int>()};
  }
  cfg.seed = opt.seed;
  cfg.n_scenes = opt.n;
  if (!opt.maneuver_mix.empty()) {
    cfg.maneuver_mix.clear();
    for (const auto& [k, v] : parse_mix(opt.maneuver_mix))
      cfg.maneuver_mix[maneuver_from_string(k)] = v;
  }
  if (!opt.region_mix.empty()) {
    cfg.region_mix.clear();
    for (const auto& [k, v] : parse_mix(opt.region_mix)) cfg.region_mix[k] = v;
  }
  const auto colon = opt.agents.find(':');
  if (colon == std::string::npos)
    throw std::runtime_error("--agents expects min:max");
  cfg.agents_per_scene = {std::stoi(opt.agents.substr(0, colon)),
                          std::stoi(opt.agents.substr(colon + 1))};
  cfg.node_spacing = opt.spacing;
  cfg.noise_sigma = opt.noise;
  cfg.val_fraction = opt.val_fraction;
  cfg.history_len = opt.history;
  cfg.horizon = opt.horizon;
  cfg.validate();
  return cfg;
}

int run_gen(const GenOptions& opt) {
  Stopwatch watch;
  WorldConfig cfg = world_config_from(opt);
  Dataset data = gen_dataset(cfg);
  save_scenes(opt.out, data.train);
  std::vector<std::string> outputs = {opt.out};
  if (!data.val.empty()) {
    const std::string val_path = sibling_path(opt.out, ".val");
    save_scenes(val_path, data.val);
    outputs.push_back(val_path);
  }
  std::printf("wrote %zu train / %zu val scenes\n", data.train.size(), data.val.size());

  RunManifest m;
  m.subcommand = "gen";
  m.seed = opt.seed;
  m.outputs = outputs;
  m.config = {{"n", std::to_string(opt.n)},
              {"spacing", std::to_string(cfg.node_spacing)},
              {"noise_sigma", std::to_string(cfg.noise_sigma)},
              {"val_fraction", std::to_string(cfg.val_fraction)},
              {"history_len", std::to_string(cfg.history_len)},
              {"horizon", std::to_string(cfg.horizon)}};
  for (const auto& [k, v] : cfg.maneuver_mix)
    m.config["maneuver_mix." + std::string(to_string(k))] = std::to_string(v);
  for (const auto& [k, v] : cfg.region_mix)
    m.config["region_mix." + k] = std::to_string(v);
  finish_manifest(m, watch, opt.out + ".manifest.json");
  return 0;
}

// ---- labels ----------------------------------------------------------------

struct LabelsOptions {
  std::string scenes;
  std::string pretext = "mask";
  std::string out;
  std::uint64_t seed = 0;
  double epsilon = 2.0;
  double ratio = 0.4;
};

int run_labels(const LabelsOptions& opt) {
  Stopwatch watch;
  const Pretext pretext = pretext_from_string(opt.pretext);
  if (pretext == Pretext::none)
    throw std::runtime_error("labels: choose a pretext task (mask, d2i, maneuver, goal)");
  std::vector<Scene> scenes = load_scenes(opt.scenes);
  std::ofstream os(opt.out);
  if (!os) throw std::runtime_error("cannot open output: " + opt.out);

  ManeuverLabels maneuver_labels;
  if (pretext == Pretext::maneuver) maneuver_labels = label_maneuvers(scenes, opt.seed);

  for (std::size_t i = 0; i < scenes.size(); ++i) {
    json j;
    j["id"] = scene_id(scenes[i], i);
    j["pretext"] = opt.pretext;
    switch (pretext) {
      case Pretext::mask: {
        auto [perturbed, spec] = mask_lanes(scenes[i].graph, opt.ratio, opt.seed + i);
        j["ratio"] = spec.ratio;
        j["masked"] = spec.masked_nodes;
        json targets = json::array();
        for (std::size_t t = 0; t < spec.masked_nodes.size(); ++t) {
          json row = json::array();
          for (int f = 0; f < kNodeFeatureDim; ++f)
            row.push_back(spec.target_features[t * kNodeFeatureDim + f]);
          targets.push_back(std::move(row));
        }
        j["targets"] = std::move(targets);
        break;
      }
      case Pretext::d2i: {
        try {
          DistanceLabels labels = bfs_distance_to_intersection(scenes[i].graph);
          j["d"] = labels.d;
          json reach = json::array();
          for (bool r : labels.reachable) reach.push_back(r ? 1 : 0);
          j["reachable"] = std::move(reach);
        } catch (const std::runtime_error& e) {
          j["error"] = e.what();
        }
        break;
      }
      case Pretext::maneuver: {
        const int label = maneuver_labels.labels[i];
        if (label < 0) {
          j["error"] = "focus agent has no future";
        } else {
          j["label"] = label;
          j["name"] = to_string(static_cast<Maneuver>(label));
        }
        break;
      }
      case Pretext::goal: {
        GoalLabels labels = label_goal_candidates(scenes[i], opt.epsilon);
        j["epsilon"] = labels.epsilon;
        j["labels"] = labels.labels;
        j["flagged"] = !labels.has_positive;
        break;
      }
      case Pretext::none:
        break;
    }
    os << j.dump() << "\n";
  }
  std::printf("labeled %zu scenes (%s)\n", scenes.size(), opt.pretext.c_str());

  RunManifest m;
  m.subcommand = "labels";
  m.seed = opt.seed;
  m.inputs = {opt.scenes};
  m.outputs = {opt.out};
  m.config = {{"pretext", opt.pretext},
              {"epsilon", std::to_string(opt.epsilon)},
              {"ratio", std::to_string(opt.ratio)}};
  finish_manifest(m, watch, opt.out + ".manifest.json");
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainOptions {
  std::string scenes;
  std::string pretext = "none";
  int hidden = 32;
  int modes = 6;
  int steps = 2000;
  int batch = 32;
  double lr = 1e-3;
  double lr_after = 1e-4;
  int decay_step = -1;  // default: 80% of steps
  std::uint64_t seed = 0;
  bool augment = false;
  std::string warm_start;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double mask_ratio = 0.4;
  std::string out = "run";
};

int run_train(const TrainOptions& opt) {
  Stopwatch watch;
  std::vector<Scene> scenes = load_scenes(opt.scenes);
  ModelConfig mcfg =
      config_for_dataset(scenes, opt.hidden, opt.modes, pretext_from_string(opt.pretext));

  TrainConfig tcfg;
  tcfg.steps = opt.steps;
  tcfg.batch_size = opt.batch;
  tcfg.lr_initial = opt.lr;
  tcfg.lr_after = opt.lr_after;
  tcfg.lr_decay_step = opt.decay_step >= 0 ? opt.decay_step : opt.steps * 4 / 5;
  tcfg.seed = opt.seed;
  tcfg.augment = opt.augment;
  tcfg.warm_start_path = opt.warm_start;
  tcfg.alpha1 = opt.alpha1;
  tcfg.alpha2 = opt.alpha2;
  tcfg.mask_ratio = opt.mask_ratio;

  fs::create_directories(opt.out);
  TrainOutput result = train(scenes, mcfg, tcfg);

  const std::string ckpt_path = (fs::path(opt.out) / "checkpoint.bin").string();
  const std::string log_path = (fs::path(opt.out) / "train_log.csv").string();
  save_checkpoint(result.model.store(), ckpt_path, mcfg.to_json_string());
  write_train_log_csv(log_path, result.log);
  if (!result.log.empty())
    std::printf("final step %d: total %.4f supervised %.4f\n", result.log.back().step,
                result.log.back().total, result.log.back().supervised());

  RunManifest m;
  m.subcommand = "train";
  m.seed = opt.seed;
  m.inputs = {opt.scenes};
  if (!opt.warm_start.empty()) m.inputs.push_back(opt.warm_start);
  m.outputs = {ckpt_path, log_path};
  m.config = {{"pretext", opt.pretext},
              {"hidden", std::to_string(opt.hidden)},
              {"modes", std::to_string(opt.modes)},
              {"steps", std::to_string(opt.steps)},
              {"batch", std::to_string(opt.batch)},
              {"lr", std::to_string(opt.lr)},
              {"lr_after", std::to_string(opt.lr_after)},
              {"lr_decay_step", std::to_string(tcfg.lr_decay_step)},
              {"augment", opt.augment ? "1" : "0"},
              {"alpha1", std::to_string(opt.alpha1)},
              {"alpha2", std::to_string(opt.alpha2)},
              {"mask_ratio", std::to_string(opt.mask_ratio)}};
  finish_manifest(m, watch, (fs::path(opt.out) / "manifest.json").string());
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalOptions {
  std::string scenes;
  std::string checkpoint;
  std::string forecasts;
  int k = 6;
  std::string out;
};

int run_eval(const EvalOptions& opt) {
  Stopwatch watch;
  std::vector<Scene> scenes = load_scenes(opt.scenes);
  MetricReport report;

  if (!opt.checkpoint.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(opt.checkpoint);
    ModelConfig cfg = ModelConfig::from_json_string(ckpt.config_json);
    ForecastModel model(cfg, std::move(ckpt.store));
    report = evaluate_model(model, scenes, std::min(opt.k, cfg.k_modes));
  } else if (!opt.forecasts.empty()) {
    LoadedForecasts loaded = load_forecasts(opt.forecasts);
    std::map<std::string, const Scene*> by_id;
    for (std::size_t i = 0; i < scenes.size(); ++i)
      by_id[scene_id(scenes[i], i)] = &scenes[i];
    std::vector<std::vector<Vec2>> gts;
    for (std::size_t i = 0; i < loaded.ids.size(); ++i) {
      auto it = by_id.find(loaded.ids[i]);
      if (it == by_id.end())
        throw std::runtime_error("forecast id not found in scenes: " + loaded.ids[i]);
      gts.push_back(it->second->focus().future_positions);
    }
    int k = opt.k;
    for (const auto& f : loaded.forecasts)
      k = std::min<int>(k, static_cast<int>(f.modes.size()));
    report = evaluate_forecasts(loaded.forecasts, gts, k);
  } else {
    throw std::runtime_error("eval: provide --checkpoint or --forecasts");
  }

  std::printf("K=%d  n=%d\nminADE   %.4f\nminFDE   %.4f\nMR@2m    %.4f\nbrier-FDE %.4f\n",
              report.k, report.n_scenes, report.min_ade, report.min_fde,
              report.miss_rate, report.brier_min_fde);

  std::vector<std::string> outputs;
  if (!opt.out.empty()) {
    std::ofstream os(opt.out);
    os << "k,min_ade,min_fde,miss_rate,brier_min_fde,n_scenes\n"
       << report.k << "," << report.min_ade << "," << report.min_fde << ","
       << report.miss_rate << "," << report.brier_min_fde << "," << report.n_scenes << "\n";
    outputs.push_back(opt.out);

    RunManifest m;
    m.subcommand = "eval";
    m.inputs = {opt.scenes};
    if (!opt.checkpoint.empty()) m.inputs.push_back(opt.checkpoint);
    if (!opt.forecasts.empty()) m.inputs.push_back(opt.forecasts);
    m.outputs = outputs;
    m.config = {{"k", std::to_string(opt.k)}};
    finish_manifest(m, watch, opt.out + ".manifest.json");
  }
  return 0;
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeOptions {
  std::string train_scenes;
  std::string scenes;  // validation
  std::vector<std::string> checkpoints;  // name=path
  std::string out = "analysis";
  int k = 6;
  int steps = 400;
  int batch = 16;
  std::uint64_t seed = 0;
};

int run_analyze(const AnalyzeOptions& opt) {
  Stopwatch watch;
  std::vector<Scene> train_set = load_scenes(opt.train_scenes);
  std::vector<Scene> val_set = load_scenes(opt.scenes);

  std::vector<std::pair<std::string, std::string>> ckpts;
  for (const auto& spec : opt.checkpoints) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--checkpoints expects name=path entries");
    ckpts.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
  }

  SuiteConfig cfg;
  cfg.retrain.steps = opt.steps;
  cfg.retrain.batch_size = opt.batch;
  cfg.retrain.lr_decay_step = opt.steps * 4 / 5;
  cfg.eval_k = opt.k;
  cfg.seed = opt.seed;

  fs::create_directories(opt.out);
  std::vector<SuiteRow> rows = generalization_suite(ckpts, train_set, val_set, cfg);
  const std::string table = suite_table(rows);
  std::printf("%s", table.c_str());
  const std::string csv_path = (fs::path(opt.out) / "suite.csv").string();
  const std::string txt_path = (fs::path(opt.out) / "suite.txt").string();
  {
    std::ofstream os(csv_path);
    os << suite_csv(rows);
    std::ofstream ot(txt_path);
    ot << table;
  }

  // pairwise CKA of M2A and A2A focus features across the checkpointed models
  std::vector<std::string> feat_names;
  std::vector<FeatureMatrix> feats;
  for (const auto& [name, path] : ckpts) {
    LoadedCheckpoint ckpt = load_checkpoint(path);
    ModelConfig mcfg = ModelConfig::from_json_string(ckpt.config_json);
    ForecastModel model(mcfg, std::move(ckpt.store));
    feats.push_back(extract_stage_features(model, val_set, FeatureStage::m2a));
    feat_names.push_back(name + ":m2a");
    feats.push_back(extract_stage_features(model, val_set, FeatureStage::a2a));
    feat_names.push_back(name + ":a2a");
  }
  const std::string cka_path = (fs::path(opt.out) / "cka_matrix.csv").string();
  {
    std::ofstream os(cka_path);
    os << "features";
    for (const auto& n : feat_names) os << "," << n;
    os << "\n";
    for (std::size_t i = 0; i < feats.size(); ++i) {
      os << feat_names[i];
      for (std::size_t j = 0; j < feats.size(); ++j) os << "," << cka(feats[i], feats[j]);
      os << "\n";
    }
  }
  std::printf("wrote %s, %s, %s\n", csv_path.c_str(), txt_path.c_str(), cka_path.c_str());

  RunManifest m;
  m.subcommand = "analyze";
  m.seed = opt.seed;
  m.inputs = {opt.train_scenes, opt.scenes};
  for (const auto& [name, path] : ckpts) m.inputs.push_back(path);
  m.outputs = {csv_path, txt_path, cka_path};
  m.config = {{"k", std::to_string(opt.k)},
              {"steps", std::to_string(opt.steps)},
              {"batch", std::to_string(opt.batch)}};
  finish_manifest(m, watch, (fs::path(opt.out) / "manifest.json").string());
  return 0;
}

// ---- plot ------------------------------------------------------------------

struct PlotOptions {
  std::string scenes;
  std::string checkpoint;
  std::string out = "plots";
  int n = 8;
};

int run_plot(const PlotOptions& opt) {
  Stopwatch watch;
  std::vector<Scene> scenes = load_scenes(opt.scenes);
  LoadedCheckpoint ckpt = load_checkpoint(opt.checkpoint);
  ModelConfig cfg = ModelConfig::from_json_string(ckpt.config_json);
  ForecastModel model(cfg, std::move(ckpt.store));

  fs::create_directories(opt.out);
  std::vector<std::string> outputs;
  const int limit = std::min<int>(opt.n, static_cast<int>(scenes.size()));
  for (int i = 0; i < limit; ++i) {
    Forecast forecast = model.predict(scenes[static_cast<std::size_t>(i)]);
    const std::string path =
        (fs::path(opt.out) /
         ("scene_" + scene_id(scenes[static_cast<std::size_t>(i)], static_cast<std::size_t>(i)) + ".svg"))
            .string();
    write_scene_svg(path, scenes[static_cast<std::size_t>(i)], &forecast);
    outputs.push_back(path);
  }
  std::printf("wrote %zu svg files to %s\n", outputs.size(), opt.out.c_str());

  RunManifest m;
  m.subcommand = "plot";
  m.inputs = {opt.scenes, opt.checkpoint};
  m.outputs = outputs;
  m.config = {{"n", std::to_string(opt.n)}};
  finish_manifest(m, watch, (fs::path(opt.out) / "manifest.json").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic lane-graph motion forecasting with self-supervised pretext tasks"};
  app.require_subcommand(1);

  GenOptions gen_opt;
  auto* gen = app.add_subcommand("gen", "generate a synthetic scene dataset");
  gen->add_option("--seed", gen_opt.seed, "rng seed")->envname("SSLLANES_SEED")
      ->capture_default_str();
  gen->add_option("--n", gen_opt.n, "number of scenes")->capture_default_str();
  gen->add_option("--out", gen_opt.out, "output scene file (jsonl)")
      ->envname("SSLLANES_OUT")->required();
  gen->add_option("--config", gen_opt.config_path, "world config json file");
  gen->add_option("--maneuver-mix", gen_opt.maneuver_mix,
                  "weights, e.g. maintain-speed=2,turn-left=1");
  gen->add_option("--region-mix", gen_opt.region_mix, "weights, e.g. A=0.8,B=0.2");
  gen->add_option("--agents", gen_opt.agents, "agents per scene, min:max")
      ->capture_default_str();
  gen->add_option("--spacing", gen_opt.spacing, "lane node spacing, meters")
      ->capture_default_str();
  gen->add_option("--noise", gen_opt.noise, "past observation noise sigma, meters")
      ->capture_default_str();
  gen->add_option("--val-frac", gen_opt.val_fraction, "validation fraction")
      ->capture_default_str();
  gen->add_option("--history", gen_opt.history, "past steps L")->capture_default_str();
  gen->add_option("--horizon", gen_opt.horizon, "future steps T")->capture_default_str();

  LabelsOptions labels_opt;
  auto* labels = app.add_subcommand("labels", "export pseudo-labels for a pretext task");
  labels->add_option("--scenes", labels_opt.scenes, "input scenes (jsonl)")
      ->envname("SSLLANES_SCENES")->required();
  labels->add_option("--pretext", labels_opt.pretext, "mask | d2i | maneuver | goal")
      ->envname("SSLLANES_PRETEXT")->capture_default_str();
  labels->add_option("--out", labels_opt.out, "output label file (jsonl)")
      ->envname("SSLLANES_OUT")->required();
  labels->add_option("--seed", labels_opt.seed, "rng seed")->envname("SSLLANES_SEED")
      ->capture_default_str();
  labels->add_option("--epsilon", labels_opt.epsilon, "goal success radius, meters")
      ->capture_default_str();
  labels->add_option("--ratio", labels_opt.ratio, "lane masking ratio")
      ->capture_default_str();

  TrainOptions train_opt;
  auto* train_cmd = app.add_subcommand("train", "train a model, optionally with a pretext task");
  train_cmd->add_option("--scenes", train_opt.scenes, "training scenes (jsonl)")
      ->envname("SSLLANES_SCENES")->required();
  train_cmd->add_option("--pretext", train_opt.pretext,
                        "none | mask | d2i | maneuver | goal")
      ->envname("SSLLANES_PRETEXT")->capture_default_str();
  train_cmd->add_option("--hidden", train_opt.hidden, "hidden feature width")
      ->envname("SSLLANES_HIDDEN")->capture_default_str();
  train_cmd->add_option("--modes", train_opt.modes, "forecast modes K")
      ->envname("SSLLANES_MODES")->capture_default_str();
  train_cmd->add_option("--steps", train_opt.steps, "training steps")
      ->envname("SSLLANES_STEPS")->capture_default_str();
  train_cmd->add_option("--batch", train_opt.batch, "batch size")->capture_default_str();
  train_cmd->add_option("--lr", train_opt.lr, "initial learning rate")
      ->capture_default_str();
  train_cmd->add_option("--lr-after", train_opt.lr_after, "learning rate after decay")
      ->capture_default_str();
  train_cmd->add_option("--decay-step", train_opt.decay_step,
                        "lr decay step (default 80% of steps)");
  train_cmd->add_option("--seed", train_opt.seed, "rng seed")->envname("SSLLANES_SEED")
      ->capture_default_str();
  train_cmd->add_flag("--augment", train_opt.augment, "rotation augmentation");
  train_cmd->add_option("--warm-start", train_opt.warm_start,
                        "checkpoint supplying the map encoder");
  train_cmd->add_option("--alpha1", train_opt.alpha1, "supervised loss weight")
      ->capture_default_str();
  train_cmd->add_option("--alpha2", train_opt.alpha2, "self-supervised loss weight")
      ->capture_default_str();
  train_cmd->add_option("--mask-ratio", train_opt.mask_ratio, "lane masking ratio")
      ->capture_default_str();
  train_cmd->add_option("--out", train_opt.out, "output directory")
      ->envname("SSLLANES_OUT")->capture_default_str();

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or a forecast file");
  eval_cmd->add_option("--scenes", eval_opt.scenes, "evaluation scenes (jsonl)")
      ->envname("SSLLANES_SCENES")->required();
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "model checkpoint")
      ->envname("SSLLANES_CHECKPOINT");
  eval_cmd->add_option("--forecasts", eval_opt.forecasts, "precomputed forecasts (jsonl)");
  eval_cmd->add_option("--k", eval_opt.k, "top-K for the metrics")->capture_default_str();
  eval_cmd->add_option("--out", eval_opt.out, "report csv path")->envname("SSLLANES_OUT");

  AnalyzeOptions analyze_opt;
  auto* analyze = app.add_subcommand("analyze",
                                     "generalization suite plus CKA feature similarity");
  analyze->add_option("--train-scenes", analyze_opt.train_scenes, "training scenes (jsonl)")
      ->required();
  analyze->add_option("--scenes", analyze_opt.scenes, "validation scenes (jsonl)")
      ->envname("SSLLANES_SCENES")->required();
  analyze->add_option("--checkpoints", analyze_opt.checkpoints,
                      "name=path entries, repeatable")->required();
  analyze->add_option("--out", analyze_opt.out, "output directory")
      ->envname("SSLLANES_OUT")->capture_default_str();
  analyze->add_option("--k", analyze_opt.k, "top-K for the metrics")->capture_default_str();
  analyze->add_option("--steps", analyze_opt.steps, "retraining steps per setting")
      ->envname("SSLLANES_STEPS")->capture_default_str();
  analyze->add_option("--batch", analyze_opt.batch, "retraining batch size")
      ->capture_default_str();
  analyze->add_option("--seed", analyze_opt.seed, "rng seed")->envname("SSLLANES_SEED")
      ->capture_default_str();

  PlotOptions plot_opt;
  auto* plot = app.add_subcommand("plot", "render scenes and forecasts as svg");
  plot->add_option("--scenes", plot_opt.scenes, "scenes to render (jsonl)")
      ->envname("SSLLANES_SCENES")->required();
  plot->add_option("--checkpoint", plot_opt.checkpoint, "model checkpoint")
      ->envname("SSLLANES_CHECKPOINT")->required();
  plot->add_option("--out", plot_opt.out, "output directory")->envname("SSLLANES_OUT")
      ->capture_default_str();
  plot->add_option("--n", plot_opt.n, "number of scenes to render")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen(gen_opt);
    if (labels->parsed()) return run_labels(labels_opt);
    if (train_cmd->parsed()) return run_train(train_opt);
    if (eval_cmd->parsed()) return run_eval(eval_opt);
    if (analyze->parsed()) return run_analyze(analyze_opt);
    if (plot->parsed()) return run_plot(plot_opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
