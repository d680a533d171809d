#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slstm/data.hpp"
#include "slstm/gradcheck.hpp"
#include "slstm/model.hpp"
#include "slstm/rng.hpp"
#include "slstm/scenegrid.hpp"

using namespace slstm;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// one-cell LSTM with every weight and bias zero
ParamMap zero_lstm_params() {
  ParamMap p;
  for (const char* m : {"W_ix", "W_ih", "W_ic", "W_fx", "W_fh", "W_fc", "W_cx",
                        "W_ch", "W_ox", "W_oh", "W_oc"})
    p["z." + std::string(m)] = Tensor({1, 1});
  for (const char* b : {"b_i", "b_f", "b_c", "b_o"})
    p["z." + std::string(b)] = Tensor({1});
  return p;
}

model::LstmState run_zero_lstm(ad::Graph& g, double x, double h, double c) {
  static const ParamMap params = zero_lstm_params();
  model::ParamLeaves pl(g, params);
  model::LstmState s{g.leaf(Tensor({1}, {h})), g.leaf(Tensor({1}, {c}))};
  return model::lstm_step(g, pl, "z.", g.leaf(Tensor({1}, {x})), s, false);
}

model::ModelConfig toy_config(bool use_scene) {
  model::ModelConfig cfg;
  cfg.hidden = 6;
  cfg.embed = 4;
  cfg.grid.grid_dim = 4;
  cfg.grid.subgrid_dim = 4;
  cfg.use_scene = use_scene;
  cfg.variant = grid::Variant::Nonlinear;
  cfg.dropout = 0.0;
  return cfg;
}

data::Batch random_batch(int n_targets, int t_obs, int t_pred, std::uint64_t seed) {
  Rng rng(seed);
  data::Batch b;
  b.t_obs = t_obs;
  b.t_pred = t_pred;
  for (int i = 0; i < n_targets; ++i) {
    data::BatchTarget tgt;
    tgt.target_id = i + 1;
    data::Vec2 p{rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7)};
    for (int t = 0; t < t_obs + t_pred; ++t) {
      tgt.positions.push_back(p);
      p.x += rng.uniform(-0.1, 0.1);
      p.y += rng.uniform(-0.1, 0.1);
    }
    tgt.offsets = data::compute_offsets(tgt.positions);
    b.targets.push_back(std::move(tgt));
  }
  return b;
}

}  // namespace

TEST_CASE("zero-weight LSTM from a zero state stays at zero") {
  ad::Graph g;
  const auto s = run_zero_lstm(g, 0.4, 0.0, 0.0);
  CHECK(g.value(s.c).v[0] == 0.0);
  CHECK(g.value(s.h).v[0] == 0.0);
}

TEST_CASE("zero-weight LSTM halves a carried memory of 2") {
  ad::Graph g;
  const auto s = run_zero_lstm(g, 0.0, 0.0, 2.0);
  // gates all sigmoid(0) = 0.5, candidate tanh(0) = 0
  CHECK(g.value(s.c).v[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.value(s.h).v[0] ==
        doctest::Approx(0.5 * std::tanh(1.0)).epsilon(1e-15));
  CHECK(g.value(s.h).v[0] == doctest::Approx(0.3808).epsilon(1e-3));
}

TEST_CASE("zero offsets embed to the zero vector and embeddings are non-negative") {
  const auto cfg = toy_config(false);
  const auto params = model::init_params(cfg, 3);
  ad::Graph g;
  model::ParamLeaves pl(g, params);
  const auto zero = g.relu(
      g.matvec(pl.get("ped.W_ie"), g.leaf(Tensor({2}, {0.0, 0.0}))));
  for (double v : g.value(zero).v) CHECK(v == 0.0);
  Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const auto e = g.relu(g.matvec(
        pl.get("ped.W_ie"),
        g.leaf(Tensor({2}, {rng.uniform(-1, 1), rng.uniform(-1, 1)}))));
    for (double v : g.value(e).v) CHECK(v >= 0.0);
  }
}

TEST_CASE("gaussian head anchors: raw zeros give unit sigma and zero rho") {
  ad::Graph g;
  const auto gn = model::gaussian_head(g, g.leaf(Tensor({5})));
  const auto p = gn.values(g);
  CHECK(p.mu_x == 0.0);
  CHECK(p.sigma_x == 1.0);
  CHECK(p.sigma_y == 1.0);
  CHECK(p.rho == 0.0);

  Rng rng(12);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor raw({5});
    for (double& v : raw.v) v = rng.uniform(-6, 6);
    const auto q = model::gaussian_head(g, g.leaf(raw)).values(g);
    CHECK(q.sigma_x > 0.0);
    CHECK(q.sigma_y > 0.0);
    CHECK(std::abs(q.rho) < 1.0);
  }
}

TEST_CASE("negative log likelihood closed forms") {
  model::GaussianParams p;  // standard bivariate normal
  CHECK(model::nll_value(p, 0.0, 0.0) ==
        doctest::Approx(kLog2Pi).epsilon(1e-12));
  CHECK(model::nll_value(p, 1.0, 0.0) ==
        doctest::Approx(kLog2Pi + 0.5).epsilon(1e-12));

  ad::Graph g;
  const auto gn = model::gaussian_head(g, g.leaf(Tensor({5})));
  CHECK(g.value(model::nll_loss(g, gn, 0.0, 0.0)).v[0] ==
        doctest::Approx(kLog2Pi).epsilon(1e-12));
  CHECK(g.value(model::nll_loss(g, gn, 1.0, 0.0)).v[0] ==
        doctest::Approx(kLog2Pi + 0.5).epsilon(1e-12));
}

TEST_CASE("the loss is stationary in mu at the target") {
  ad::Graph g;
  Tensor raw({5}, {0.37, -0.81, 0.2, -0.1, 0.4});
  const auto leaf = g.leaf(raw);
  const auto gn = model::gaussian_head(g, leaf);
  const auto loss = model::nll_loss(g, gn, 0.37, -0.81);
  g.backward(loss);
  CHECK(std::abs(g.grad(leaf).v[0]) < 1e-14);  // d/d mu_x
  CHECK(std::abs(g.grad(leaf).v[1]) < 1e-14);  // d/d mu_y
}

TEST_CASE("graph nll agrees with the numeric mirror on random params") {
  Rng rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor raw({5});
    for (double& v : raw.v) v = rng.uniform(-2, 2);
    ad::Graph g;
    const auto gn = model::gaussian_head(g, g.leaf(raw));
    const double dx = rng.uniform(-1, 1), dy = rng.uniform(-1, 1);
    CHECK(g.value(model::nll_loss(g, gn, dx, dy)).v[0] ==
          doctest::Approx(model::nll_value(gn.values(g), dx, dy))
              .epsilon(1e-12));
  }
}

TEST_CASE("sampling collapses to the mean as sigma vanishes") {
  model::GaussianParams p;
  p.mu_x = 0.3;
  p.mu_y = -0.2;
  p.sigma_x = p.sigma_y = std::exp(-30.0);
  p.rho = 0.4;
  Rng rng(5);
  const auto s = model::sample_offset(p, rng);
  CHECK(std::abs(s.x - 0.3) < 1e-10);
  CHECK(std::abs(s.y + 0.2) < 1e-10);

  Rng r1(77), r2(77);
  model::GaussianParams q;
  const auto a = model::sample_offset(q, r1);
  const auto b = model::sample_offset(q, r2);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
}

TEST_CASE("sampled offsets reproduce the requested correlation") {
  model::GaussianParams p;
  p.rho = 0.5;
  Rng rng(123);
  const int n = 100000;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const auto s = model::sample_offset(p, rng);
    sx += s.x;
    sy += s.y;
    sxx += s.x * s.x;
    syy += s.y * s.y;
    sxy += s.x * s.y;
  }
  const double mx = sx / n, my = sy / n;
  const double corr = (sxy / n - mx * my) /
                      std::sqrt((sxx / n - mx * mx) * (syy / n - my * my));
  CHECK(std::abs(corr - 0.5) < 0.02);
}

TEST_CASE("training loss decomposes into per-frame terms") {
  const auto cfg = toy_config(false);
  const auto params = model::init_params(cfg, 19);
  const auto batch = random_batch(1, 3, 3, 42);
  grid::GridBank bank(cfg.grid, cfg.hidden);
  bank.set_flags(std::vector<bool>(cfg.grid.cells(), false), cfg.variant);

  ad::Graph g;
  model::ParamLeaves pl(g, params);
  const auto res =
      model::forward_window(g, pl, batch, bank, cfg, model::Mode::Train);

  // replay the window step by step, accumulating nll values independently
  ad::Graph r;
  model::ParamLeaves rp(r, params);
  model::LstmState s{r.leaf(Tensor::zeros({(std::size_t)cfg.hidden})),
                     r.leaf(Tensor::zeros({(std::size_t)cfg.hidden}))};
  double total = 0.0;
  const auto& tgt = batch.targets[0];
  for (int t = 0; t + 1 < batch.total(); ++t) {
    const auto x = r.leaf(Tensor({2}, {tgt.offsets[t].x, tgt.offsets[t].y}));
    const auto e = r.relu(r.matvec(rp.get("ped.W_ie"), x));
    const auto ns = model::lstm_step(r, rp, "ped.lstm.", e, s, false);
    const auto h_state = r.relu(ns.h);
    s = {h_state, ns.c};
    const auto raw =
        r.add(r.matvec(rp.get("head.W"), h_state), rp.get("head.b"));
    const auto gp = model::gaussian_head(r, raw).values(r);
    total += model::nll_value(gp, tgt.offsets[t + 1].x, tgt.offsets[t + 1].y);
  }
  CHECK(res.loss == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("all-zero hard control reproduces the scene-free model bitwise") {
  auto scene_cfg = toy_config(true);
  const auto params = model::init_params(scene_cfg, 31);
  const auto batch = random_batch(3, 4, 4, 55);

  grid::GridBank off_bank(scene_cfg.grid, scene_cfg.hidden);
  off_bank.set_flags(std::vector<bool>(scene_cfg.grid.cells(), false),
                     grid::Variant::Nonlinear);  // K = 0 everywhere
  ad::Graph g1;
  model::ParamLeaves p1(g1, params);
  const auto with_scene = model::forward_window(g1, p1, batch, off_bank,
                                                scene_cfg, model::Mode::PredictMean);

  auto plain_cfg = scene_cfg;
  plain_cfg.use_scene = false;
  grid::GridBank unused(plain_cfg.grid, plain_cfg.hidden);
  ad::Graph g2;
  model::ParamLeaves p2(g2, params);
  const auto without = model::forward_window(g2, p2, batch, unused, plain_cfg,
                                             model::Mode::PredictMean);

  REQUIRE(with_scene.predictions.size() == without.predictions.size());
  for (std::size_t i = 0; i < without.predictions.size(); ++i) {
    REQUIRE(with_scene.predictions[i].size() == without.predictions[i].size());
    for (std::size_t t = 0; t < without.predictions[i].size(); ++t) {
      CHECK(with_scene.predictions[i][t].x == without.predictions[i][t].x);
      CHECK(with_scene.predictions[i][t].y == without.predictions[i][t].y);
    }
  }
}

TEST_CASE("filtered scene data stays within [0, relu(h_g)]") {
  const auto cfg = toy_config(true);
  const auto params = model::init_params(cfg, 47);
  // drive a window and inspect F indirectly through its defining parts:
  // gate in [0,1] times relu(h_g) * K, recomputed here from scratch
  Rng rng(9);
  ad::Graph g;
  model::ParamLeaves pl(g, params);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor hg({(std::size_t)cfg.hidden});
    Tensor e({(std::size_t)cfg.embed});
    Tensor ht({(std::size_t)cfg.hidden});
    for (double& v : hg.v) v = rng.uniform(-2, 2);
    for (double& v : e.v) v = rng.uniform(0, 2);
    for (double& v : ht.v) v = rng.uniform(-2, 2);
    const auto gate = g.sigmoid(
        g.add(g.matvec(pl.get("sdf.W"), g.concat(g.leaf(e), g.leaf(ht))),
              pl.get("sdf.b")));
    const auto hard = g.relu(g.leaf(hg));
    const auto F = g.value(g.mul(gate, hard));
    for (std::size_t i = 0; i < F.numel(); ++i) {
      CHECK(F.v[i] >= 0.0);
      CHECK(F.v[i] <= std::max(0.0, hg.v[i]));
    }
  }
}

TEST_CASE("a saturated gate passes relu(h_g) through almost unchanged") {
  const auto cfg = toy_config(true);
  auto params = model::init_params(cfg, 47);
  params.at("sdf.W") = Tensor({(std::size_t)cfg.hidden,
                               (std::size_t)(cfg.embed + cfg.hidden)});
  for (double& v : params.at("sdf.b").v) v = 40.0;  // sigmoid -> 1
  ad::Graph g;
  model::ParamLeaves pl(g, params);
  Tensor hg({(std::size_t)cfg.hidden}, {1.5, -0.5, 0.25, 2.0, -3.0, 0.0});
  const auto gate = g.sigmoid(g.add(
      g.matvec(pl.get("sdf.W"),
               g.leaf(Tensor::zeros({(std::size_t)(cfg.embed + cfg.hidden)}))),
      pl.get("sdf.b")));
  const auto F = g.value(g.mul(gate, g.relu(g.leaf(hg))));
  for (std::size_t i = 0; i < F.numel(); ++i)
    CHECK(F.v[i] == doctest::Approx(std::max(0.0, hg.v[i])).epsilon(1e-12));
}

TEST_CASE("predict_mean is deterministic and train rejects empty batches") {
  const auto cfg = toy_config(true);
  const auto params = model::init_params(cfg, 61);
  const auto batch = random_batch(2, 4, 4, 77);
  std::vector<std::vector<data::Vec2>> first;
  for (int run = 0; run < 2; ++run) {
    grid::GridBank bank(cfg.grid, cfg.hidden);
    bank.set_flags(std::vector<bool>(cfg.grid.cells(), true), cfg.variant);
    ad::Graph g;
    model::ParamLeaves pl(g, params);
    const auto res = model::forward_window(g, pl, batch, bank, cfg,
                                           model::Mode::PredictMean);
    if (run == 0) {
      first = res.predictions;
    } else {
      for (std::size_t i = 0; i < first.size(); ++i)
        for (std::size_t t = 0; t < first[i].size(); ++t) {
          CHECK(res.predictions[i][t].x == first[i][t].x);
          CHECK(res.predictions[i][t].y == first[i][t].y);
        }
    }
  }

  data::Batch empty;
  empty.t_obs = 4;
  empty.t_pred = 4;
  grid::GridBank bank(cfg.grid, cfg.hidden);
  ad::Graph g;
  model::ParamLeaves pl(g, params);
  CHECK_THROWS_AS(
      model::forward_window(g, pl, empty, bank, cfg, model::Mode::Train),
      std::invalid_argument);
}

TEST_CASE("gradient reaches visited scene cells and skips unvisited ones") {
  const auto cfg = toy_config(true);
  const auto params = model::init_params(cfg, 71);
  const auto batch = random_batch(2, 3, 3, 88);
  grid::GridBank bank(cfg.grid, cfg.hidden);
  bank.set_flags(std::vector<bool>(cfg.grid.cells(), true), grid::Variant::All);

  std::vector<bool> visited(cfg.grid.cells(), false);
  for (const auto& tgt : batch.targets)
    for (const auto& p : tgt.positions)
      visited[grid::locate(cfg.grid, p.x, p.y).cell] = true;

  ad::Graph g;
  model::ParamLeaves pl(g, params);
  const auto res =
      model::forward_window(g, pl, batch, bank, cfg, model::Mode::Train);
  g.backward(res.loss_node);
  const auto grads = pl.collect_grads(/*include_untouched=*/true);

  bool any_visited_nonzero = false;
  for (int j = 0; j < cfg.grid.cells(); ++j) {
    const auto& gw = grads.at("scene." + std::to_string(j) + ".lstm.W_cx");
    double mag = 0.0;
    for (double v : gw.v) mag += std::abs(v);
    if (visited[j]) {
      if (mag > 0.0) any_visited_nonzero = true;
    } else {
      CHECK(mag == 0.0);
    }
  }
  CHECK(any_visited_nonzero);
}

TEST_CASE("line fit continues constant-velocity and stationary inputs") {
  std::vector<data::Vec2> obs;
  for (int t = 0; t < 8; ++t) obs.push_back({0.1 * t, -0.05 * t + 1.0});
  const auto pred = model::linear_baseline(obs, 4);
  for (int k = 0; k < 4; ++k) {
    const double t = 7.0 + (k + 1);
    CHECK(pred[k].x == doctest::Approx(0.1 * t).epsilon(1e-12));
    CHECK(pred[k].y == doctest::Approx(-0.05 * t + 1.0).epsilon(1e-12));
  }

  std::vector<data::Vec2> still(5, data::Vec2{0.4, 0.4});
  for (const auto& p : model::linear_baseline(still, 3)) {
    CHECK(p.x == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(p.y == doctest::Approx(0.4).epsilon(1e-14));
  }

  CHECK_THROWS_AS(model::linear_baseline(std::vector<data::Vec2>{{0.0, 0.0}}, 3),
                  std::invalid_argument);
}

TEST_CASE("line fit slope matches the normal equations on noisy input") {
  Rng rng(14);
  std::vector<data::Vec2> obs;
  const int n = 10;
  for (int t = 0; t < n; ++t)
    obs.push_back({0.07 * t + 0.01 * rng.gaussian(), 0.5});
  const auto pred = model::linear_baseline(obs, 2);

  // closed-form least squares for x(t) = a + b t
  double st = 0, stt = 0, sx = 0, stx = 0;
  for (int t = 0; t < n; ++t) {
    st += t;
    stt += 1.0 * t * t;
    sx += obs[t].x;
    stx += t * obs[t].x;
  }
  const double b = (n * stx - st * sx) / (n * stt - st * st);
  const double a = (sx - b * st) / n;
  CHECK(pred[0].x == doctest::Approx(a + b * n).epsilon(1e-12));
  CHECK(pred[1].x == doctest::Approx(a + b * (n + 1)).epsilon(1e-12));
}

TEST_CASE("lstm gradients survive a standalone finite-difference probe") {
  auto cfg = toy_config(true);
  cfg.grid.grid_dim = 2;
  auto params = model::init_params(cfg, 777);
  Rng rng(778);
  for (auto& [name, t] : params)
    if (t.rank() == 1)
      for (double& v : t.v) v = rng.uniform(-0.1, 0.1);
  const auto batch = random_batch(1, 3, 2, 99);
  const auto rep = gradcheck::check_model(params, batch, cfg, 1e-5, 1e-4);
  INFO("worst " << rep.worst_group()->name << " " << rep.worst());
  CHECK(rep.pass);
}
