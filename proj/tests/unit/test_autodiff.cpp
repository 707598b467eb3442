#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "ssllanes/autodiff.hpp"
#include "ssllanes/param_store.hpp"
#include "support/gradcheck.hpp"

using namespace ssllanes;
using testsupport::gradcheck;
using testsupport::random_values;

namespace {

constexpr double kOpTol = 1e-5;

ad::Var leaf2(ad::Graph& g, int r, int c, std::mt19937_64& rng) {
  return g.leaf({r, c}, random_values(rng, static_cast<std::size_t>(r) * c), true);
}

}  // namespace

TEST_CASE("relu forward and backward at fixed points") {
  ad::Graph g;
  ad::Var x = g.leaf({2}, {-1.0, 2.0}, true);
  ad::Var y = ad::sum(ad::relu(x));
  g.backward(y);
  CHECK(ad::relu(x).value()[0] == 0.0);
  CHECK(ad::relu(x).value()[1] == 2.0);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("backward requires a scalar loss") {
  ad::Graph g;
  ad::Var x = g.leaf({2, 2}, {1, 2, 3, 4}, true);
  CHECK_THROWS(g.backward(x));
}

TEST_CASE("shape mismatch errors name the op and shapes") {
  ad::Graph g;
  ad::Var a = g.leaf({2, 3}, std::vector<double>(6, 1.0), true);
  ad::Var b = g.leaf({2, 3}, std::vector<double>(6, 1.0), true);
  CHECK_THROWS_WITH_AS(ad::matmul(a, b), doctest::Contains("matmul"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(ad::matmul(a, b), doctest::Contains("[2,3]"),
                       std::invalid_argument);
}

TEST_CASE("loss = sum(W) has all-ones gradient") {
  ad::Graph g;
  ad::Var w = g.leaf({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  g.backward(ad::sum(w));
  for (double v : w.grad()) CHECK(v == 1.0);
}

TEST_CASE("disjoint subgraphs leave unreached leaves with zero gradient") {
  ad::Graph g;
  ad::Var a = g.leaf({2}, {1.0, 2.0}, true);
  ad::Var b = g.leaf({2}, {3.0, 4.0}, true);
  ad::Var loss = ad::sum(ad::mul(a, a));
  g.backward(loss);
  CHECK(b.grad()[0] == 0.0);
  CHECK(b.grad()[1] == 0.0);
}

TEST_CASE("repeated backward from fresh forwards matches exactly") {
  std::mt19937_64 rng(7);
  auto w0 = random_values(rng, 6);
  std::vector<double> g1, g2;
  for (int pass = 0; pass < 2; ++pass) {
    ad::Graph g;
    ad::Var w = g.leaf({2, 3}, w0, true);
    ad::Var x = g.constant({3, 2}, {1, 2, 3, 4, 5, 6});
    ad::Var loss = ad::mean_all(ad::relu(ad::matmul(w, x)));
    g.backward(loss);
    (pass == 0 ? g1 : g2) = w.grad();
  }
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("focal loss with gamma=0 alpha=1 collapses to binary cross entropy") {
  std::mt19937_64 rng(11);
  auto logits = random_values(rng, 8, -3.0, 3.0);
  std::vector<int> labels = {1, 0, 1, 1, 0, 0, 1, 0};
  ad::Graph g;
  ad::Var z = g.leaf({8}, logits, true);
  const double fl = ad::focal_loss(z, labels, 0.0, 1.0).scalar();
  // reference: two-class cross entropy with logits [0, z]
  double ce = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double p1 = 1.0 / (1.0 + std::exp(-logits[static_cast<std::size_t>(i)]));
    ce += labels[static_cast<std::size_t>(i)] == 1 ? -std::log(p1) : -std::log(1.0 - p1);
  }
  ce /= 8.0;
  CHECK(fl == doctest::Approx(ce).epsilon(1e-9));
}

TEST_CASE("every exported op passes central finite differences") {
  std::mt19937_64 rng(1234);
  const int runs = 8;  // the acceptance suite runs the 50-instance sweep

  for (int run = 0; run < runs; ++run) {
    CAPTURE(run);

    SUBCASE("") {}
    {
      // matmul + add + mul + sub chain
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            ad::Var y = ad::matmul(in[0], in[1]);
            ad::Var z = ad::mul(ad::add(y, in[2]), ad::sub(y, in[2]));
            return ad::mean_all(z);
          },
          {{3, 4}, {4, 2}, {3, 2}},
          {random_values(rng, 12), random_values(rng, 8), random_values(rng, 6)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // scalar family
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            ad::Var y = ad::mul_scalar(ad::add_scalar(in[0], 0.7), -1.3);
            y = ad::add_const(y, {0.1, 0.2, 0.3, 0.4});
            y = ad::mul_const(y, {1.5, -0.5, 2.0, 0.25});
            return ad::sum(y);
          },
          {{4}}, {random_values(rng, 4)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // concat both axes, gather/scatter, tile, select, reshape
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            ad::Var c1 = ad::concat({in[0], in[1]}, 1);            // [2,5]
            ad::Var c0 = ad::concat({c1, c1}, 0);                  // [4,5]
            ad::Var gr = ad::gather_rows(c0, {3, 0, 0, 2});        // [4,5]
            ad::Var sc = ad::scatter_add_rows(gr, {1, 1, 0, 2}, 3);
            ad::Var tl = ad::tile_rows(in[2], 3);                  // [3,5]
            ad::Var s = ad::mean_all(ad::mul(sc, tl));
            ad::Var flat = ad::reshape(in[0], {6});
            return ad::add(s, ad::select_index(flat, 4));
          },
          {{2, 3}, {2, 2}, {1, 5}},
          {random_values(rng, 6), random_values(rng, 4), random_values(rng, 5)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // relu / sigmoid away from kinks
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            return ad::mean_all(ad::add(ad::relu(in[0]), ad::sigmoid(in[0])));
          },
          {{3, 3}}, {random_values(rng, 9, -2.0, 2.0, 0.0, 0.05)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // layer_norm 2-D
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            return ad::mean_all(ad::layer_norm(in[0], in[1], in[2]));
          },
          {{3, 4}, {4}, {4}},
          {random_values(rng, 12), random_values(rng, 4, 0.5, 1.5),
           random_values(rng, 4)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // layer_norm 3-D (normalizes across channels)
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            return ad::mean_all(ad::layer_norm(in[0], in[1], in[2]));
          },
          {{2, 3, 4}, {3}, {3}},
          {random_values(rng, 24), random_values(rng, 3, 0.5, 1.5),
           random_values(rng, 3)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // softmax composed with a weighting
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            return ad::sum(ad::mul_const(ad::softmax(in[0]), {0.3, -1.0, 2.0, 0.5, 1.1}));
          },
          {{5}}, {random_values(rng, 5)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // conv1d stride 1 and 2, with upsample/select_time on top
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            ad::Var y = ad::conv1d(in[0], in[1], in[2], 1, 1);   // [2,3,6]
            ad::Var z = ad::conv1d(y, in[3], in[4], 2, 1);       // [2,2,3]
            ad::Var u = ad::upsample_nearest(z, 6);
            return ad::mean_all(ad::select_time(u, -1));
          },
          {{2, 2, 6}, {3, 2, 3}, {3}, {2, 3, 3}, {2}},
          {random_values(rng, 24), random_values(rng, 18), random_values(rng, 3),
           random_values(rng, 18), random_values(rng, 2)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // linear + cumsum + masked_mean + norm2
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            ad::Var y = ad::linear(in[0], in[1], in[2]);   // [4,2]
            ad::Var c = ad::cumsum_rows(y);
            ad::Var m = ad::masked_mean(c, {true, false, true, true});
            return ad::add(m, ad::norm2(in[0], in[3]));
          },
          {{4, 3}, {3, 2}, {2}, {4, 3}},
          {random_values(rng, 12), random_values(rng, 6), random_values(rng, 2),
           random_values(rng, 12)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // smooth_l1 away from |d| == beta, mse
      auto pred = random_values(rng, 10);
      auto tgt = random_values(rng, 10);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (std::abs(std::abs(pred[i] - tgt[i]) - 1.0) < 0.05) pred[i] += 0.2;
      }
      auto r = gradcheck(
          [](ad::Graph& g, const std::vector<ad::Var>& in) {
            return ad::add(ad::smooth_l1(in[0], in[1]), ad::mse(in[0], in[1]));
          },
          {{5, 2}, {5, 2}}, {pred, tgt});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // cross entropy, 2-D batch form
      std::vector<int> labels = {2, 0, 1};
      auto r = gradcheck(
          [labels](ad::Graph& g, const std::vector<ad::Var>& in) {
            return ad::cross_entropy(in[0], labels);
          },
          {{3, 4}}, {random_values(rng, 12, -3.0, 3.0)});
      CHECK(r.max_rel_err < kOpTol);
    }
    {
      // focal loss, gamma 2 alpha 0.25
      std::vector<int> labels = {1, 0, 0, 1, 0, 1};
      auto r = gradcheck(
          [labels](ad::Graph& g, const std::vector<ad::Var>& in) {
            return ad::focal_loss(in[0], labels, 2.0, 0.25);
          },
          {{6}}, {random_values(rng, 6, -3.0, 3.0)});
      CHECK(r.max_rel_err < kOpTol);
    }
  }
}

TEST_CASE("composite MLP gradient matches finite differences") {
  std::mt19937_64 rng(99);
  auto r = gradcheck(
      [](ad::Graph& g, const std::vector<ad::Var>& in) {
        ad::Var h = ad::relu(ad::linear(in[0], in[1], in[2]));
        h = ad::layer_norm(h, in[3], in[4]);
        ad::Var out = ad::linear(h, in[5], in[6]);
        return ad::mse(out, in[7]);
      },
      {{4, 3}, {3, 5}, {5}, {5}, {5}, {5, 2}, {2}, {4, 2}},
      {random_values(rng, 12), random_values(rng, 15), random_values(rng, 5),
       random_values(rng, 5, 0.5, 1.5), random_values(rng, 5),
       random_values(rng, 10), random_values(rng, 2), random_values(rng, 8)});
  CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ParameterStore store;
  store.add("w", ParamGroup::decoder, {2, 2}, {1.0, 2.0, 3.0, 4.0});
  const auto before = store.at("w").value;
  adam_step(store, 1e-2);
  CHECK(store.at("w").value == before);
}

TEST_CASE("adam: constant gradient step size approaches lr * sign(g)") {
  ParameterStore store;
  store.add("w", ParamGroup::decoder, {1}, {0.0});
  const double lr = 1e-2;
  double prev = 0.0;
  double step = 0.0;
  for (int i = 0; i < 200; ++i) {
    store.at("w").grad = {3.5};  // constant positive gradient
    adam_step(store, lr);
    step = prev - store.at("w").value[0];
    prev = store.at("w").value[0];
  }
  CHECK(step == doctest::Approx(lr).epsilon(1e-3));
}

TEST_CASE("adam: quadratic bowl reaches |x| < 1e-3 within 500 steps") {
  ParameterStore store;
  store.add("x", ParamGroup::decoder, {2}, {1.0, -1.0});
  int reached_at = -1;
  for (int i = 0; i < 500; ++i) {
    auto& p = store.at("x");
    p.grad = {2.0 * p.value[0], 2.0 * p.value[1]};  // d/dx of x^2 + y^2
    adam_step(store, 1e-2);
    if (reached_at < 0 && std::abs(p.value[0]) < 1e-3 && std::abs(p.value[1]) < 1e-3)
      reached_at = i + 1;
  }
  CHECK(reached_at > 0);
  CHECK(std::abs(store.at("x").value[0]) < 1e-3);
  CHECK(std::abs(store.at("x").value[1]) < 1e-3);
}

TEST_CASE("graph params flush accumulates into the store") {
  ParameterStore store;
  store.add("w", ParamGroup::decoder, {2}, {1.0, -1.0});
  for (int pass = 0; pass < 2; ++pass) {
    ad::Graph g;
    GraphParams params(g, store);
    ad::Var w = params("w");
    g.backward(ad::sum(ad::mul(w, w)));
    params.flush();
  }
  // d/dw sum(w^2) = 2w, accumulated twice
  CHECK(store.at("w").grad[0] == doctest::Approx(4.0));
  CHECK(store.at("w").grad[1] == doctest::Approx(-4.0));
  store.zero_grad();
  CHECK(store.at("w").grad[0] == 0.0);
}

TEST_CASE("checkpoint round trip is byte exact") {
  std::mt19937_64 rng(5);
  ParameterStore store;
  store.add("enc.w", ParamGroup::agent_encoder, {3, 4}, random_values(rng, 12));
  store.add("map.w0", ParamGroup::map_encoder, {4, 4}, random_values(rng, 16));
  store.add("dec.b", ParamGroup::decoder, {7}, random_values(rng, 7));

  const std::string p1 = "ckpt_roundtrip_a.bin";
  const std::string p2 = "ckpt_roundtrip_b.bin";
  save_checkpoint(store, p1, R"({"hidden":8})");
  auto loaded = load_checkpoint(p1);
  CHECK(loaded.store.size() == 3);
  CHECK(loaded.store.at("map.w0").group == ParamGroup::map_encoder);
  save_checkpoint(loaded.store, p2, loaded.config_json);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("warm start replaces only the map encoder group") {
  std::mt19937_64 rng(6);
  ParameterStore src;
  src.add("map.w0", ParamGroup::map_encoder, {2, 2}, {9, 9, 9, 9});
  src.add("dec.w", ParamGroup::decoder, {2}, {5, 5});
  const std::string path = "ckpt_warmstart.bin";
  save_checkpoint(src, path);

  ParameterStore dst;
  dst.add("map.w0", ParamGroup::map_encoder, {2, 2}, {0, 0, 0, 0});
  dst.add("dec.w", ParamGroup::decoder, {2}, {1, 1});
  warm_start_map_encoder(dst, path);
  CHECK(dst.at("map.w0").value == std::vector<double>{9, 9, 9, 9});
  CHECK(dst.at("dec.w").value == std::vector<double>{1, 1});

  ParameterStore bad;
  bad.add("map.w0", ParamGroup::map_encoder, {2, 3}, std::vector<double>(6, 0.0));
  CHECK_THROWS_WITH_AS(warm_start_map_encoder(bad, path), doctest::Contains("map.w0"),
                       std::runtime_error);
  std::remove(path.c_str());
}
