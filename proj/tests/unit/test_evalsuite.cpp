#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "ssllanes/evalsuite.hpp"
#include "ssllanes/synthgen.hpp"

using namespace ssllanes;

namespace {

Forecast make_forecast(std::mt19937_64& rng, int k, int t) {
  Forecast f;
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int m = 0; m < k; ++m) {
    std::vector<Vec2> pts(static_cast<std::size_t>(t));
    for (auto& p : pts) p = {u(rng), u(rng)};
    f.modes.push_back(std::move(pts));
  }
  std::vector<double> logits(static_cast<std::size_t>(k));
  for (auto& v : logits) v = u(rng) / 10.0;
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  for (double v : logits) f.scores.push_back(std::exp(v - mx) / z);
  return f;
}

std::vector<Vec2> make_gt(std::mt19937_64& rng, int t) {
  std::vector<Vec2> out(static_cast<std::size_t>(t));
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (auto& p : out) p = {u(rng), u(rng)};
  return out;
}

}  // namespace

TEST_CASE("perfect mode gives zero minADE and minFDE") {
  std::mt19937_64 rng(1);
  Forecast f = make_forecast(rng, 3, 6);
  std::vector<Vec2> gt = f.modes[2];
  CHECK(min_ade(f, gt, 3) == doctest::Approx(0.0));
  CHECK(min_fde(f, gt, 3) == doctest::Approx(0.0));
}

TEST_CASE("two modes with endpoint errors 1 and 5 give minFDE 1") {
  Forecast f;
  f.modes = {{{0, 0}, {1, 0}}, {{0, 0}, {5, 0}}};
  f.scores = {0.5, 0.5};
  std::vector<Vec2> gt = {{0, 0}, {0, 0}};
  CHECK(min_fde(f, gt, 2) == doctest::Approx(1.0));
}

TEST_CASE("metrics match exhaustive-loop oracles and are monotone in K") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 6, t = 5;
    Forecast f = make_forecast(rng, k, t);
    std::vector<Vec2> gt = make_gt(rng, t);

    for (int kk : {1, 3, 6}) {
      // oracle: sort by score desc (stable), take kk, exhaustive min
      std::vector<int> order(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return f.scores[static_cast<std::size_t>(a)] >
                                                  f.scores[static_cast<std::size_t>(b)]; });
      double best_ade = 1e300, best_fde = 1e300;
      for (int i = 0; i < kk; ++i) {
        const auto& mode = f.modes[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        double ade = 0.0;
        for (int s = 0; s < t; ++s) ade += distance(mode[static_cast<std::size_t>(s)],
                                                    gt[static_cast<std::size_t>(s)]);
        ade /= t;
        best_ade = std::min(best_ade, ade);
        best_fde = std::min(best_fde, distance(mode.back(), gt.back()));
      }
      CHECK(min_ade(f, gt, kk) == doctest::Approx(best_ade).epsilon(1e-12));
      CHECK(min_fde(f, gt, kk) == doctest::Approx(best_fde).epsilon(1e-12));
    }
    CHECK(min_fde(f, gt, 6) <= min_fde(f, gt, 1) + 1e-12);
    CHECK(min_ade(f, gt, 6) <= min_ade(f, gt, 1) + 1e-12);
    // FDE of any mode <= T * its ADE
    CHECK(min_fde(f, gt, 6) <= t * min_ade(f, gt, 6) + 1e-9);
  }
}

TEST_CASE("miss rate uses the 2 m threshold inclusively") {
  auto single = [](double endpoint_err) {
    Forecast f;
    f.modes = {{{0, 0}, {endpoint_err, 0}}};
    f.scores = {1.0};
    return f;
  };
  std::vector<Vec2> gt = {{0, 0}, {0, 0}};
  CHECK(miss_rate({single(1.9)}, {gt}, 1) == doctest::Approx(0.0));
  CHECK(miss_rate({single(2.1)}, {gt}, 1) == doctest::Approx(1.0));
  CHECK(miss_rate({single(2.0)}, {gt}, 1) == doctest::Approx(1.0));  // >= threshold
  CHECK(miss_rate({single(0.0), single(3.0)}, {gt, gt}, 1) == doctest::Approx(0.5));
}

TEST_CASE("brier-minFDE adds the squared probability shortfall") {
  Forecast f;
  f.modes = {{{0, 0}, {1, 0}}, {{0, 0}, {9, 0}}};
  f.scores = {0.5, 0.5};
  std::vector<Vec2> gt = {{0, 0}, {0, 0}};
  CHECK(brier_min_fde(f, gt, 2) == doctest::Approx(1.0 + 0.25));

  f.scores = {1.0, 0.0};
  CHECK(brier_min_fde(f, gt, 2) == doctest::Approx(min_fde(f, gt, 2)));

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Forecast rf = make_forecast(rng, 4, 4);
    std::vector<Vec2> rgt = make_gt(rng, 4);
    const double fde = min_fde(rf, rgt, 4);
    // hand formula: p of the argmin mode
    double p = 0.0;
    for (std::size_t m = 0; m < rf.modes.size(); ++m)
      if (std::abs(distance(rf.modes[m].back(), rgt.back()) - fde) < 1e-12) {
        p = rf.scores[m];
        break;
      }
    CHECK(brier_min_fde(rf, rgt, 4) == doctest::Approx(fde + (1 - p) * (1 - p)).epsilon(1e-9));
    CHECK(brier_min_fde(rf, rgt, 4) >= fde);
  }
}

TEST_CASE("metrics are invariant under a global rigid transform") {
  std::mt19937_64 rng(11);
  Forecast f = make_forecast(rng, 4, 5);
  std::vector<Vec2> gt = make_gt(rng, 5);
  const double a1 = min_ade(f, gt, 4), f1 = min_fde(f, gt, 4);

  const double theta = 1.1;
  const Vec2 shift{4.0, -7.0};
  Forecast ft = f;
  for (auto& mode : ft.modes)
    for (auto& p : mode) p = rotated(p, theta) + shift;
  std::vector<Vec2> gtt = gt;
  for (auto& p : gtt) p = rotated(p, theta) + shift;
  CHECK(min_ade(ft, gtt, 4) == doctest::Approx(a1).epsilon(1e-9));
  CHECK(min_fde(ft, gtt, 4) == doctest::Approx(f1).epsilon(1e-9));
}

TEST_CASE("metric errors: missing ground truth and k out of range") {
  std::mt19937_64 rng(13);
  Forecast f = make_forecast(rng, 2, 4);
  CHECK_THROWS_AS(min_ade(f, {}, 2), std::invalid_argument);
  CHECK_THROWS_AS(min_fde(f, make_gt(rng, 4), 3), std::invalid_argument);
}

TEST_CASE("cka: self similarity, orthogonal and scale invariance, symmetry") {
  std::mt19937_64 rng(17);
  const int n = 40, d = 6;
  FeatureMatrix x{n, d, {}};
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < n * d; ++i) x.data.push_back(u(rng));

  CHECK(cka(x, x) == doctest::Approx(1.0).epsilon(1e-9));

  // random orthogonal Q by Gram-Schmidt
  std::vector<std::vector<double>> q(static_cast<std::size_t>(d),
                                     std::vector<double>(static_cast<std::size_t>(d)));
  for (auto& row : q)
    for (auto& v : row) v = u(rng);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      double dp = 0.0;
      for (int c = 0; c < d; ++c) dp += q[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] *
                                        q[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
      for (int c = 0; c < d; ++c) q[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -=
          dp * q[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
    }
    double nrm = 0.0;
    for (int c = 0; c < d; ++c) nrm += q[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] *
                                       q[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    nrm = std::sqrt(nrm);
    for (int c = 0; c < d; ++c) q[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] /= nrm;
  }
  FeatureMatrix xq{n, d, std::vector<double>(static_cast<std::size_t>(n) * d, 0.0)};
  for (int r = 0; r < n; ++r)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        xq.data[static_cast<std::size_t>(r) * d + j] +=
            x.at(r, i) * q[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  CHECK(cka(x, xq) == doctest::Approx(1.0).epsilon(1e-8));

  FeatureMatrix xs = x;
  for (auto& v : xs.data) v *= 3.7;
  CHECK(cka(x, xs) == doctest::Approx(1.0).epsilon(1e-9));

  FeatureMatrix y{n, 4, {}};
  for (int i = 0; i < n * 4; ++i) y.data.push_back(u(rng));
  CHECK(cka(x, y) == doctest::Approx(cka(y, x)).epsilon(1e-9));
  CHECK(cka(x, y) >= 0.0);
  CHECK(cka(x, y) <= 1.0);

  FeatureMatrix z{n, 2, std::vector<double>(static_cast<std::size_t>(n) * 2, 1.0)};
  CHECK_THROWS_AS(cka(x, z), std::invalid_argument);
}

TEST_CASE("cka matches a naive double-loop computation") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 12, d1 = 3, d2 = 5;
    FeatureMatrix a{n, d1, {}}, b{n, d2, {}};
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < n * d1; ++i) a.data.push_back(u(rng));
    for (int i = 0; i < n * d2; ++i) b.data.push_back(u(rng));

    // naive: center columns, then compute the three Frobenius terms directly
    auto center = [&](FeatureMatrix m) {
      for (int c = 0; c < m.cols; ++c) {
        double mean = 0.0;
        for (int r = 0; r < m.rows; ++r) mean += m.at(r, c);
        mean /= m.rows;
        for (int r = 0; r < m.rows; ++r)
          m.data[static_cast<std::size_t>(r) * m.cols + c] -= mean;
      }
      return m;
    };
    FeatureMatrix ac = center(a), bc = center(b);
    double cross = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < d2; ++i)
      for (int j = 0; j < d1; ++j) {
        double dp = 0.0;
        for (int r = 0; r < n; ++r) dp += bc.at(r, i) * ac.at(r, j);
        cross += dp * dp;
      }
    for (int i = 0; i < d1; ++i)
      for (int j = 0; j < d1; ++j) {
        double dp = 0.0;
        for (int r = 0; r < n; ++r) dp += ac.at(r, i) * ac.at(r, j);
        na += dp * dp;
      }
    for (int i = 0; i < d2; ++i)
      for (int j = 0; j < d2; ++j) {
        double dp = 0.0;
        for (int r = 0; r < n; ++r) dp += bc.at(r, i) * bc.at(r, j);
        nb += dp * dp;
      }
    const double expect = cross / (std::sqrt(na) * std::sqrt(nb));
    CHECK(cka(a, b) == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("inject_noise: p=0 identity, p=1 perturbs everything with variance 0.2") {
  WorldConfig cfg;
  cfg.seed = 3;
  cfg.n_scenes = 60;
  Dataset data = gen_dataset(cfg);

  auto same = inject_noise(data.train, 0.0, 0.2, 7, NoiseTarget::both);
  for (std::size_t i = 0; i < same.size(); ++i) {
    CHECK(same[i].graph.node_features == data.train[i].graph.node_features);
    for (std::size_t a = 0; a < same[i].agents.size(); ++a)
      for (std::size_t l = 0; l < same[i].agents[a].past_positions.size(); ++l)
        CHECK(distance(same[i].agents[a].past_positions[l],
                       data.train[i].agents[a].past_positions[l]) == 0.0);
  }

  auto noisy = inject_noise(data.train, 1.0, 0.2, 7, NoiseTarget::both);
  double sum = 0.0, sum2 = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    // futures untouched
    for (std::size_t a = 0; a < noisy[i].agents.size(); ++a)
      for (std::size_t l = 0; l < noisy[i].agents[a].future_positions.size(); ++l)
        CHECK(distance(noisy[i].agents[a].future_positions[l],
                       data.train[i].agents[a].future_positions[l]) == 0.0);
    for (std::size_t f = 0; f < noisy[i].graph.node_features.size(); ++f) {
      const double delta = noisy[i].graph.node_features[f] -
                           data.train[i].graph.node_features[f];
      sum += delta;
      sum2 += delta * delta;
      count++;
    }
  }
  REQUIRE(count > 10000);
  const double mean = sum / count;
  const double var = sum2 / count - mean * mean;
  // variance of the sample variance ~ 2 sigma^4 / n; allow 5 sigma
  const double tol = 5.0 * std::sqrt(2.0 * 0.2 * 0.2 / count);
  CHECK(std::abs(var - 0.2) < tol);
  CHECK(std::abs(mean) < 5.0 * std::sqrt(0.2 / count));
}

TEST_CASE("inject_noise: selection fraction within a binomial interval at p=0.25") {
  WorldConfig cfg;
  cfg.seed = 5;
  cfg.n_scenes = 60;
  Dataset data = gen_dataset(cfg);
  auto noisy = inject_noise(data.train, 0.25, 0.2, 11, NoiseTarget::map);
  int selected = 0, total = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    for (int n = 0; n < noisy[i].graph.num_nodes(); ++n) {
      bool changed = false;
      for (int f = 0; f < kNodeFeatureDim; ++f)
        changed = changed ||
                  noisy[i].graph.feature(n, f) != data.train[i].graph.feature(n, f);
      selected += changed ? 1 : 0;
      total++;
    }
    // agents untouched for target=map
    for (std::size_t a = 0; a < noisy[i].agents.size(); ++a)
      for (std::size_t l = 0; l < noisy[i].agents[a].past_positions.size(); ++l)
        CHECK(distance(noisy[i].agents[a].past_positions[l],
                       data.train[i].agents[a].past_positions[l]) == 0.0);
  }
  const double frac = static_cast<double>(selected) / total;
  const double sigma = std::sqrt(0.25 * 0.75 / total);
  CHECK(std::abs(frac - 0.25) < 5.0 * sigma);
}

TEST_CASE("forecast file round trip") {
  std::mt19937_64 rng(23);
  std::vector<Forecast> forecasts;
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) {
    forecasts.push_back(make_forecast(rng, 3, 4));
    ids.push_back("scene" + std::to_string(i));
  }
  const std::string path = "forecasts_roundtrip.jsonl";
  save_forecasts(path, ids, forecasts);
  auto loaded = load_forecasts(path);
  REQUIRE(loaded.forecasts.size() == forecasts.size());
  CHECK(loaded.ids == ids);
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    CHECK(loaded.forecasts[i].scores == forecasts[i].scores);
    for (std::size_t m = 0; m < forecasts[i].modes.size(); ++m)
      for (std::size_t t = 0; t < forecasts[i].modes[m].size(); ++t)
        CHECK(distance(loaded.forecasts[i].modes[m][t], forecasts[i].modes[m][t]) == 0.0);
  }
  std::remove(path.c_str());
}
