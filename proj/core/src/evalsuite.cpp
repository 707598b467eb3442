#include "ssllanes/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "ssllanes/param_store.hpp"

namespace ssllanes {

using nlohmann::json;

std::vector<int> top_k_modes(const Forecast& forecast, int k) {
  const int n = static_cast<int>(forecast.modes.size());
  if (k < 1 || k > n)
    throw std::invalid_argument("top_k_modes: need 1 <= k <= " + std::to_string(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return forecast.scores[static_cast<std::size_t>(a)] >
           forecast.scores[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

namespace {

void check_gt(const std::vector<Vec2>& gt, const Forecast& forecast) {
  if (gt.empty()) throw std::invalid_argument("metrics: ground truth is absent");
  for (const auto& mode : forecast.modes)
    if (mode.size() != gt.size())
      throw std::invalid_argument("metrics: mode length does not match ground truth");
}

double mode_ade(const std::vector<Vec2>& mode, const std::vector<Vec2>& gt) {
  double acc = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) acc += distance(mode[t], gt[t]);
  return acc / static_cast<double>(gt.size());
}

double mode_fde(const std::vector<Vec2>& mode, const std::vector<Vec2>& gt) {
  return distance(mode.back(), gt.back());
}

}  // namespace

double min_ade(const Forecast& forecast, const std::vector<Vec2>& gt, int k) {
  check_gt(gt, forecast);
  double best = std::numeric_limits<double>::infinity();
  for (int m : top_k_modes(forecast, k))
    best = std::min(best, mode_ade(forecast.modes[static_cast<std::size_t>(m)], gt));
  return best;
}

double min_fde(const Forecast& forecast, const std::vector<Vec2>& gt, int k) {
  check_gt(gt, forecast);
  double best = std::numeric_limits<double>::infinity();
  for (int m : top_k_modes(forecast, k))
    best = std::min(best, mode_fde(forecast.modes[static_cast<std::size_t>(m)], gt));
  return best;
}

double miss_rate(const std::vector<Forecast>& forecasts,
                 const std::vector<std::vector<Vec2>>& gts, int k, double threshold) {
  if (forecasts.size() != gts.size())
    throw std::invalid_argument("miss_rate: forecast/gt count mismatch");
  if (forecasts.empty()) return 0.0;
  int misses = 0;
  for (std::size_t i = 0; i < forecasts.size(); ++i)
    misses += min_fde(forecasts[i], gts[i], k) >= threshold ? 1 : 0;
  return static_cast<double>(misses) / static_cast<double>(forecasts.size());
}

double brier_min_fde(const Forecast& forecast, const std::vector<Vec2>& gt, int k) {
  check_gt(gt, forecast);
  double best = std::numeric_limits<double>::infinity();
  double p = 0.0;
  for (int m : top_k_modes(forecast, k)) {
    const double fde = mode_fde(forecast.modes[static_cast<std::size_t>(m)], gt);
    if (fde < best) {
      best = fde;
      p = forecast.scores[static_cast<std::size_t>(m)];
    }
  }
  return best + (1.0 - p) * (1.0 - p);
}

MetricReport evaluate_forecasts(const std::vector<Forecast>& forecasts,
                                const std::vector<std::vector<Vec2>>& gts, int k) {
  if (forecasts.size() != gts.size())
    throw std::invalid_argument("evaluate_forecasts: forecast/gt count mismatch");
  MetricReport report;
  report.k = k;
  report.n_scenes = static_cast<int>(forecasts.size());
  if (forecasts.empty()) return report;
  double ade = 0.0, fde = 0.0, brier = 0.0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    ade += min_ade(forecasts[i], gts[i], k);
    fde += min_fde(forecasts[i], gts[i], k);
    brier += brier_min_fde(forecasts[i], gts[i], k);
  }
  report.min_ade = ade / report.n_scenes;
  report.min_fde = fde / report.n_scenes;
  report.brier_min_fde = brier / report.n_scenes;
  report.miss_rate = miss_rate(forecasts, gts, k);
  return report;
}

MetricReport evaluate_model(const ForecastModel& model, const std::vector<Scene>& scenes,
                            int k) {
  std::vector<Forecast> forecasts;
  std::vector<std::vector<Vec2>> gts;
  forecasts.reserve(scenes.size());
  for (const Scene& s : scenes) {
    if (!s.focus().has_future())
      throw std::invalid_argument("evaluate_model: scene without ground-truth future");
    forecasts.push_back(model.predict(s));
    gts.push_back(s.focus().future_positions);
  }
  return evaluate_forecasts(forecasts, gts, k);
}

double cka(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.rows != b.rows) throw std::invalid_argument("cka: row count mismatch");
  if (a.rows < 2) throw std::invalid_argument("cka: need at least 2 rows");

  auto centered = [](const FeatureMatrix& m) {
    std::vector<double> out = m.data;
    for (int c = 0; c < m.cols; ++c) {
      double mean = 0.0;
      for (int r = 0; r < m.rows; ++r) mean += out[static_cast<std::size_t>(r) * m.cols + c];
      mean /= m.rows;
      for (int r = 0; r < m.rows; ++r) out[static_cast<std::size_t>(r) * m.cols + c] -= mean;
    }
    return out;
  };
  const std::vector<double> ac = centered(a);
  const std::vector<double> bc = centered(b);

  // ||X^T Y||_F^2 via explicit accumulation
  auto cross_norm2 = [&](const std::vector<double>& x, int xc, const std::vector<double>& y,
                         int yc) {
    double acc = 0.0;
    for (int i = 0; i < xc; ++i) {
      for (int j = 0; j < yc; ++j) {
        double dotp = 0.0;
        for (int r = 0; r < a.rows; ++r)
          dotp += x[static_cast<std::size_t>(r) * xc + i] * y[static_cast<std::size_t>(r) * yc + j];
        acc += dotp * dotp;
      }
    }
    return acc;
  };

  const double cross = cross_norm2(bc, b.cols, ac, a.cols);
  const double self_a = std::sqrt(cross_norm2(ac, a.cols, ac, a.cols));
  const double self_b = std::sqrt(cross_norm2(bc, b.cols, bc, b.cols));
  if (self_a <= 0.0 || self_b <= 0.0)
    throw std::invalid_argument("cka: zero-variance input");
  return cross / (self_a * self_b);
}

FeatureMatrix extract_stage_features(const ForecastModel& model,
                                     const std::vector<Scene>& scenes,
                                     FeatureStage stage) {
  FeatureMatrix out;
  out.rows = static_cast<int>(scenes.size());
  out.cols = model.config().hidden_dim;
  out.data.reserve(static_cast<std::size_t>(out.rows) * out.cols);
  for (const Scene& s : scenes) {
    ad::Graph g;
    GraphParams P(g, const_cast<ParameterStore&>(model.store()));
    DilatedAdjacency adj = adjacency_powers(s.graph, model.config().dilations);
    auto fwd = model.forward(g, P, s, adj);
    const ad::Var feats =
        stage == FeatureStage::m2a ? fwd.enc.fused_m2a : fwd.enc.fused_a2a;
    const auto& v = feats.value();
    const std::size_t offset =
        static_cast<std::size_t>(s.focus_agent) * static_cast<std::size_t>(out.cols);
    for (int c = 0; c < out.cols; ++c)
      out.data.push_back(v[offset + static_cast<std::size_t>(c)]);
  }
  return out;
}

NoiseTarget noise_target_from_string(const std::string& name) {
  if (name == "agents") return NoiseTarget::agents;
  if (name == "map") return NoiseTarget::map;
  if (name == "both") return NoiseTarget::both;
  throw std::invalid_argument("unknown noise target: " + name);
}

std::vector<Scene> inject_noise(const std::vector<Scene>& scenes, double p,
                                double sigma2, std::uint64_t seed, NoiseTarget target) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("inject_noise: p must be in [0,1]");
  if (sigma2 < 0.0) throw std::invalid_argument("inject_noise: variance must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, std::sqrt(sigma2));

  std::vector<Scene> out = scenes;
  for (Scene& s : out) {
    if (target == NoiseTarget::agents || target == NoiseTarget::both) {
      for (auto& agent : s.agents) {
        if (coin(rng) >= p) continue;
        std::vector<Vec2> disp = agent.past_displacements;
        for (auto& d : disp) {
          d.x += noise(rng);
          d.y += noise(rng);
        }
        // rebuild past positions backward from the anchored t=0 position
        std::vector<Vec2> pos(agent.past_positions.size());
        pos.back() = agent.past_positions.back();
        for (int l = static_cast<int>(disp.size()) - 1; l >= 0; --l)
          pos[static_cast<std::size_t>(l)] =
              pos[static_cast<std::size_t>(l) + 1] - disp[static_cast<std::size_t>(l)];
        agent = AgentTrack::from_positions(std::move(pos), agent.future_positions,
                                           agent.observed_mask);
      }
    }
    if (target == NoiseTarget::map || target == NoiseTarget::both) {
      for (int n = 0; n < s.graph.num_nodes(); ++n) {
        if (coin(rng) >= p) continue;
        for (int f = 0; f < kNodeFeatureDim; ++f) s.graph.feature(n, f) += noise(rng);
      }
    }
  }
  return out;
}

void save_forecasts(const std::string& path, const std::vector<std::string>& ids,
                    const std::vector<Forecast>& forecasts) {
  if (ids.size() != forecasts.size())
    throw std::invalid_argument("save_forecasts: id/forecast count mismatch");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open forecast file for writing: " + path);
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    json j;
    j["id"] = ids[i];
    json modes = json::array();
    for (const auto& mode : forecasts[i].modes) {
      json pts = json::array();
      for (const Vec2& pt : mode) pts.push_back({pt.x, pt.y});
      modes.push_back(std::move(pts));
    }
    j["modes"] = std::move(modes);
    j["scores"] = forecasts[i].scores;
    os << j.dump() << "\n";
  }
}

LoadedForecasts load_forecasts(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open forecast file: " + path);
  LoadedForecasts out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      out.ids.push_back(j.at("id").get<std::string>());
      Forecast f;
      for (const auto& mode : j.at("modes")) {
        std::vector<Vec2> pts;
        for (const auto& pt : mode) pts.push_back({pt[0].get<double>(), pt[1].get<double>()});
        f.modes.push_back(std::move(pts));
      }
      f.scores = j.at("scores").get<std::vector<double>>();
      if (f.scores.size() != f.modes.size())
        throw std::runtime_error("score count does not match modes");
      out.forecasts.push_back(std::move(f));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ssllanes
