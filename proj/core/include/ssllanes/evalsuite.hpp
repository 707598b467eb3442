// Forecasting metrics over the top-K scored modes, linear CKA feature
// similarity, and the noise-injection harness.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssllanes/model.hpp"
#include "ssllanes/scenegraph.hpp"

namespace ssllanes {

constexpr double kMissThreshold = 2.0;  // meters

struct MetricReport {
  int k = 6;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;       // fraction with min FDE >= 2 m
  double brier_min_fde = 0.0;
  int n_scenes = 0;
};

// Indices of the K highest-scoring modes, ties broken toward lower index.
std::vector<int> top_k_modes(const Forecast& forecast, int k);

double min_ade(const Forecast& forecast, const std::vector<Vec2>& gt, int k);
double min_fde(const Forecast& forecast, const std::vector<Vec2>& gt, int k);
double miss_rate(const std::vector<Forecast>& forecasts,
                 const std::vector<std::vector<Vec2>>& gts, int k,
                 double threshold = kMissThreshold);
// min FDE plus (1 - p)^2, p the score of the mode achieving the min FDE.
double brier_min_fde(const Forecast& forecast, const std::vector<Vec2>& gt, int k);

MetricReport evaluate_forecasts(const std::vector<Forecast>& forecasts,
                                const std::vector<std::vector<Vec2>>& gts, int k);
MetricReport evaluate_model(const ForecastModel& model, const std::vector<Scene>& scenes,
                            int k);

// Dense row-major feature matrix (one row per sample).
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Linear centered kernel alignment in [0, 1]. Columns are centered internally;
// throws on fewer than 2 rows or zero-variance input.
double cka(const FeatureMatrix& a, const FeatureMatrix& b);

enum class FeatureStage { m2a, a2a };
FeatureMatrix extract_stage_features(const ForecastModel& model,
                                     const std::vector<Scene>& scenes,
                                     FeatureStage stage);

enum class NoiseTarget { agents, map, both };
NoiseTarget noise_target_from_string(const std::string& name);

// Independently selects agent tracks / map nodes with probability p and adds
// zero-mean Gaussian noise of variance sigma2 per component: past
// displacements for agents, feature rows for map nodes. Futures are never
// touched.
std::vector<Scene> inject_noise(const std::vector<Scene>& scenes, double p,
                                double sigma2, std::uint64_t seed, NoiseTarget target);

// Forecast files: one JSON object {"id", "modes", "scores"} per line.
void save_forecasts(const std::string& path, const std::vector<std::string>& ids,
                    const std::vector<Forecast>& forecasts);
struct LoadedForecasts {
  std::vector<std::string> ids;
  std::vector<Forecast> forecasts;
};
LoadedForecasts load_forecasts(const std::string& path);

}  // namespace ssllanes
