// Six-setting generalization harness comparing a baseline checkpoint against
// SSL-trained variants: reduced training data, cross-region transfer, hard
// maneuvers, straight-biased training, and two noise levels.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ssllanes/evalsuite.hpp"
#include "ssllanes/scenegraph.hpp"
#include "ssllanes/trainer.hpp"

namespace ssllanes {

struct SuiteConfig {
  TrainConfig retrain;                 // scale for the settings that retrain
  int eval_k = 6;
  double train_fraction = 0.25;        // setting 1
  double minor_region_fraction = 0.2;  // setting 2: share of region B kept for training
  double straight_oversample = 2.0;    // setting 4
  std::vector<double> noise_ps = {0.25, 0.5};  // settings 5 and 6
  double noise_sigma2 = 0.2;
  std::uint64_t seed = 0;
};

// Seed salts mixed into SuiteConfig::seed for the retraining settings.
inline constexpr std::uint64_t kSuiteSaltFraction = 0x101;
inline constexpr std::uint64_t kSuiteSaltCrossRegion = 0x102;
inline constexpr std::uint64_t kSuiteSaltOversample = 0x104;

struct SuiteRow {
  std::string setting;
  std::string model_name;
  MetricReport report;
};

// `checkpoints` maps a display name to a checkpoint path; each checkpoint
// carries its own model config (and pretext). Settings 1, 2 and 4 retrain
// from scratch at the SuiteConfig.retrain scale; settings 3, 5 and 6 evaluate
// the provided checkpoints. Train/val scenes must carry region and maneuver
// tags.
std::vector<SuiteRow> generalization_suite(
    const std::vector<std::pair<std::string, std::string>>& checkpoints,
    const std::vector<Scene>& train, const std::vector<Scene>& val,
    const SuiteConfig& config);

std::string suite_table(const std::vector<SuiteRow>& rows);
std::string suite_csv(const std::vector<SuiteRow>& rows);

}  // namespace ssllanes
