// Joint training loop: supervised winner-takes-all objective plus one
// self-supervised pretext loss, Adam with a two-phase learning rate,
// deterministic batching, optional rotation augmentation and map-encoder
// warm start.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssllanes/losses.hpp"
#include "ssllanes/model.hpp"
#include "ssllanes/scenegraph.hpp"

namespace ssllanes {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 32;
  double lr_initial = 1e-3;
  double lr_after = 1e-4;
  int lr_decay_step = 1600;  // keeps the 100k/128k proportion at desk scale
  std::uint64_t seed = 0;
  bool augment = false;  // rotation augmentation, off by default
  std::vector<double> augmentation_gammas;  // radians; empty = 0..330 deg in 30 deg steps
  std::string warm_start_path;
  double mask_ratio = 0.4;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  int progress_every = 100;  // stdout cadence; 0 silences progress lines

  void validate() const;
  std::vector<double> effective_gammas() const;
};

struct TrainLogRow {
  int step = 0;
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double terminal = 0.0;
  double ss = 0.0;
  double lr = 0.0;

  double supervised() const { return cls + reg + terminal; }
};

struct TrainOutput {
  ForecastModel model;
  std::vector<TrainLogRow> log;
};

double lr_at_step(const TrainConfig& config, int step);

TrainOutput train(const std::vector<Scene>& dataset, const ModelConfig& model_config,
                  const TrainConfig& train_config);

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log);

}  // namespace ssllanes
