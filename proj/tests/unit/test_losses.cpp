#include <cmath>
#include <random>

#include "doctest.h"
#include "ssllanes/losses.hpp"
#include "support/gradcheck.hpp"

using namespace ssllanes;
using testsupport::random_values;

namespace {

DecodeOutputs fake_decode(ad::Graph& g, std::mt19937_64& rng, int k, int t,
                          bool as_leaves = true) {
  DecodeOutputs dec;
  for (int m = 0; m < k; ++m)
    dec.mode_positions.push_back(
        g.leaf({t, 2}, random_values(rng, static_cast<std::size_t>(t) * 2, -10.0, 10.0),
               as_leaves));
  dec.score_logits = g.leaf({k}, random_values(rng, static_cast<std::size_t>(k), -2.0, 2.0),
                            as_leaves);
  dec.scores = ad::softmax(dec.score_logits);
  return dec;
}

std::vector<Vec2> random_future(std::mt19937_64& rng, int t) {
  std::vector<Vec2> out(static_cast<std::size_t>(t));
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (auto& p : out) p = {u(rng), u(rng)};
  return out;
}

}  // namespace

TEST_CASE("a mode equal to the ground truth wins and zeroes the regression loss") {
  std::mt19937_64 rng(1);
  ad::Graph g;
  DecodeOutputs dec = fake_decode(g, rng, 3, 5);
  std::vector<Vec2> gt;
  const auto& v = dec.mode_positions[1].value();
  for (std::size_t i = 0; i < v.size(); i += 2) gt.push_back({v[i], v[i + 1]});

  auto sup = supervised_losses(g, dec, gt);
  CHECK(sup.best_mode == 1);
  CHECK(sup.reg.scalar() == doctest::Approx(0.0));
  CHECK(sup.terminal.scalar() == doctest::Approx(0.0));
}

TEST_CASE("classification loss is zero exactly when the margin is satisfied") {
  ad::Graph g;
  DecodeOutputs dec;
  dec.mode_positions.push_back(g.leaf({2, 2}, {0, 0, 1, 1}, false));
  dec.mode_positions.push_back(g.leaf({2, 2}, {5, 5, 6, 6}, false));
  dec.mode_positions.push_back(g.leaf({2, 2}, {9, 9, 9, 9}, false));

  dec.score_logits = g.leaf({3}, {1.0, 0.79, 0.5}, false);  // best leads by >= 0.2
  dec.scores = ad::softmax(dec.score_logits);
  CHECK(loss_cls(dec, 0).scalar() == doctest::Approx(0.0));

  dec.score_logits = g.leaf({3}, {1.0, 0.9, 0.5}, false);  // 0.9 + 0.2 > 1.0
  CHECK(loss_cls(dec, 0).scalar() > 0.0);
}

TEST_CASE("supervised losses match a brute-force reimplementation") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = std::uniform_int_distribution<int>(1, 6)(rng);
    const int t = std::uniform_int_distribution<int>(2, 8)(rng);
    ad::Graph g;
    DecodeOutputs dec = fake_decode(g, rng, k, t);
    std::vector<Vec2> gt = random_future(rng, t);

    auto sup = supervised_losses(g, dec, gt);

    // oracle: exhaustive loops
    int best = 0;
    double best_fde = std::numeric_limits<double>::infinity();
    for (int m = 0; m < k; ++m) {
      const auto& v = dec.mode_positions[static_cast<std::size_t>(m)].value();
      const double fde = std::hypot(v[v.size() - 2] - gt.back().x,
                                    v[v.size() - 1] - gt.back().y);
      if (fde < best_fde) {
        best_fde = fde;
        best = m;
      }
    }
    CHECK(sup.best_mode == best);

    const auto& bv = dec.mode_positions[static_cast<std::size_t>(best)].value();
    double reg = 0.0;
    for (int i = 0; i < t; ++i) {
      for (int c = 0; c < 2; ++c) {
        const double d = std::abs(bv[static_cast<std::size_t>(i) * 2 + c] -
                                  (c == 0 ? gt[static_cast<std::size_t>(i)].x
                                          : gt[static_cast<std::size_t>(i)].y));
        reg += d < 1.0 ? 0.5 * d * d : d - 0.5;
      }
    }
    reg /= 2.0 * t;
    CHECK(sup.reg.scalar() == doctest::Approx(reg).epsilon(1e-12));

    const auto& logits = dec.score_logits.value();
    double cls = 0.0;
    if (k > 1) {
      for (int m = 0; m < k; ++m) {
        if (m == best) continue;
        cls += std::max(0.0, logits[static_cast<std::size_t>(m)] + 0.2 -
                                 logits[static_cast<std::size_t>(best)]);
      }
      cls /= k - 1;
    }
    CHECK(sup.cls.scalar() == doctest::Approx(cls).epsilon(1e-12));
    CHECK(sup.terminal.scalar() == doctest::Approx(best_fde).epsilon(1e-12));
  }
}

TEST_CASE("terminal loss: 3-4-5 endpoint error") {
  ad::Graph g;
  DecodeOutputs dec;
  dec.mode_positions.push_back(g.leaf({2, 2}, {0, 0, 3, 4}, false));
  dec.score_logits = g.leaf({1}, {0.0}, false);
  dec.scores = ad::softmax(dec.score_logits);
  std::vector<Vec2> gt = {{0, 0}, {0, 0}};
  CHECK(loss_terminal(g, dec, gt, 0).scalar() == doctest::Approx(5.0));
}

TEST_CASE("mode selection is invariant to scaling all errors") {
  std::mt19937_64 rng(11);
  ad::Graph g;
  DecodeOutputs dec = fake_decode(g, rng, 4, 3);
  std::vector<Vec2> gt = random_future(rng, 3);
  const int base = best_mode_by_fde(dec, gt);

  // scale every mode's error about the ground truth by 3x
  ad::Graph g2;
  DecodeOutputs scaled;
  for (const auto& mode : dec.mode_positions) {
    std::vector<double> v = mode.value();
    for (std::size_t i = 0; i < v.size(); i += 2) {
      v[i] = gt[i / 2].x + 3.0 * (v[i] - gt[i / 2].x);
      v[i + 1] = gt[i / 2].y + 3.0 * (v[i + 1] - gt[i / 2].y);
    }
    scaled.mode_positions.push_back(g2.leaf({3, 2}, v, false));
  }
  scaled.score_logits = g2.leaf({4}, dec.score_logits.value(), false);
  scaled.scores = ad::softmax(scaled.score_logits);
  CHECK(best_mode_by_fde(scaled, gt) == base);
}

TEST_CASE("self-supervised losses match naive scalar-loop reimplementations") {
  std::mt19937_64 rng(13);

  // mask reconstruction
  {
    MaskSpec spec;
    spec.masked_nodes = {0, 2, 5};
    spec.target_features = random_values(rng, 12);
    ad::Graph g;
    ad::Var recon = g.leaf({3, kNodeFeatureDim}, random_values(rng, 12), true);
    double expect = 0.0;
    for (int i = 0; i < 12; ++i)
      expect += std::pow(recon.value()[static_cast<std::size_t>(i)] -
                             spec.target_features[static_cast<std::size_t>(i)], 2.0);
    expect /= 12.0;
    CHECK(loss_mask(g, recon, spec).scalar() == doctest::Approx(expect).epsilon(1e-7));
  }

  // distance regression over reachable nodes only
  {
    DistanceLabels labels;
    labels.d = {0.0, 1.0, 2.0, 0.0, 5.0};
    labels.reachable = {true, true, true, false, true};
    ad::Graph g;
    ad::Var pred = g.leaf({5}, random_values(rng, 5, -3.0, 8.0), true);
    double expect = 0.0;
    for (int i : {0, 1, 2, 4})
      expect += std::pow(pred.value()[static_cast<std::size_t>(i)] -
                             labels.d[static_cast<std::size_t>(i)], 2.0);
    expect /= 4.0;
    CHECK(loss_d2i(g, pred, labels).scalar() == doctest::Approx(expect).epsilon(1e-7));

    // constant prediction sanity: mean((c - d)^2)
    ad::Var c = g.leaf({5}, std::vector<double>(5, 2.0), false);
    const double hand = (std::pow(2.0 - 0.0, 2) + std::pow(2.0 - 1.0, 2) +
                         std::pow(2.0 - 2.0, 2) + std::pow(2.0 - 5.0, 2)) / 4.0;
    CHECK(loss_d2i(g, c, labels).scalar() == doctest::Approx(hand));
  }

  // maneuver cross entropy
  {
    ad::Graph g;
    ad::Var logits = g.leaf({kNumManeuvers}, random_values(rng, kNumManeuvers), true);
    const int label = 4;
    double mx = logits.value()[0];
    for (double v : logits.value()) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits.value()) z += std::exp(v - mx);
    const double expect = std::log(z) + mx - logits.value()[label];
    CHECK(loss_maneuver(logits, label).scalar() == doctest::Approx(expect).epsilon(1e-7));
  }

  // goal focal loss
  {
    GoalLabels labels;
    labels.labels = {1, 0, 0, 1, 0};
    labels.candidates.resize(5);
    ad::Graph g;
    ad::Var logits = g.leaf({5}, random_values(rng, 5, -3.0, 3.0), true);
    double expect = 0.0;
    for (int i = 0; i < 5; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-logits.value()[static_cast<std::size_t>(i)]));
      const double pt = labels.labels[static_cast<std::size_t>(i)] == 1 ? p : 1.0 - p;
      expect += -kFocalAlpha * std::pow(1.0 - pt, kFocalGamma) * std::log(pt);
    }
    expect /= 5.0;
    CHECK(loss_goal(logits, labels).scalar() == doctest::Approx(expect).epsilon(1e-7));
  }
}

TEST_CASE("perfect predictions drive every self-supervised loss to zero") {
  std::mt19937_64 rng(17);
  ad::Graph g;

  MaskSpec spec;
  spec.masked_nodes = {0, 1};
  spec.target_features = random_values(rng, 8);
  ad::Var recon = g.leaf({2, kNodeFeatureDim}, spec.target_features, false);
  CHECK(loss_mask(g, recon, spec).scalar() == doctest::Approx(0.0));

  DistanceLabels dl;
  dl.d = {1.0, 2.0, 3.0};
  dl.reachable = {true, true, true};
  CHECK(loss_d2i(g, g.leaf({3}, dl.d, false), dl).scalar() == doctest::Approx(0.0));

  ad::Var good_logits = g.leaf({kNumManeuvers}, {30, -5, -5, -5, -5, -5}, false);
  CHECK(loss_maneuver(good_logits, 0).scalar() == doctest::Approx(0.0).epsilon(1e-9));

  GoalLabels gl;
  gl.labels = {1, 0, 0};
  gl.candidates.resize(3);
  ad::Var extreme = g.leaf({3}, {40.0, -40.0, -40.0}, false);
  CHECK(loss_goal(extreme, gl).scalar() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("total loss recomposes from its components") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    ad::Graph g;
    DecodeOutputs dec = fake_decode(g, rng, 4, 5);
    std::vector<Vec2> gt = random_future(rng, 5);
    auto sup = supervised_losses(g, dec, gt);
    ad::Var ss = g.leaf({1}, {std::uniform_real_distribution<double>(0.0, 4.0)(rng)}, true);
    const double a1 = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    const double a2 = std::uniform_real_distribution<double>(0.1, 2.0)(rng);

    auto total = total_loss(g, sup, ss, a1, a2);
    const auto& c = total.report.components;
    CHECK(total.report.total ==
          doctest::Approx(a1 * (c.at("cls") + c.at("reg") + c.at("terminal")) +
                          a2 * c.at("ss")).epsilon(1e-9));

    auto pure = total_loss(g, sup, ad::Var{}, 1.0, 0.0);
    CHECK(pure.report.total ==
          doctest::Approx(c.at("cls") + c.at("reg") + c.at("terminal")).epsilon(1e-9));
  }
}

TEST_CASE("every loss passes finite-difference gradient checks") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 4, t = 5;
    // pack modes and logits as gradcheck leaves
    std::vector<ad::Shape> shapes;
    std::vector<std::vector<double>> values;
    for (int m = 0; m < k; ++m) {
      shapes.push_back({t, 2});
      values.push_back(random_values(rng, static_cast<std::size_t>(t) * 2, -6.0, 6.0));
    }
    shapes.push_back({k});
    values.push_back(random_values(rng, k, -2.0, 2.0));
    std::vector<Vec2> gt = random_future(rng, t);

    auto build = [&](ad::Graph& g, const std::vector<ad::Var>& in) {
      DecodeOutputs dec;
      for (int m = 0; m < k; ++m) dec.mode_positions.push_back(in[static_cast<std::size_t>(m)]);
      dec.score_logits = in[static_cast<std::size_t>(k)];
      dec.scores = ad::softmax(dec.score_logits);
      auto sup = supervised_losses(g, dec, gt);
      return total_loss(g, sup, ad::Var{}).value;
    };
    auto r = testsupport::gradcheck(build, shapes, values);
    CHECK(r.max_rel_err < 1e-4);
  }
}
