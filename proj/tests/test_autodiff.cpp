#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "slstm/gradcheck.hpp"
#include "slstm/graph.hpp"
#include "slstm/optim.hpp"
#include "slstm/tensor.hpp"

using namespace slstm;

TEST_CASE("elementary forward values") {
  ad::Graph g;
  CHECK(g.value(g.sigmoid(g.leaf(Tensor::scalar(0.0)))).v[0] == 0.5);
  CHECK(g.value(g.tanh(g.leaf(Tensor::scalar(0.0)))).v[0] == 0.0);
  const auto w = g.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  const auto x = g.leaf(Tensor({2}, {3, -4}));
  const auto y = g.value(g.matvec(w, x));
  CHECK(y.v[0] == 3.0);
  CHECK(y.v[1] == -4.0);
}

TEST_CASE("backward of x squared at x = 3") {
  ad::Graph g;
  const auto x = g.leaf(Tensor::scalar(3.0));
  const auto loss = g.mul(x, x);
  g.backward(loss);
  CHECK(g.grad(x).v[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward of sigmoid at 0 gives 0.25") {
  ad::Graph g;
  const auto x = g.leaf(Tensor::scalar(0.0));
  const auto loss = g.sigmoid(x);
  g.backward(loss);
  CHECK(g.grad(x).v[0] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("sigmoid chain matches the closed-form derivative product") {
  ad::Graph g;
  const double x0 = 0.3;
  const auto x = g.leaf(Tensor::scalar(x0));
  auto y = x;
  constexpr int N = 7;
  for (int i = 0; i < N; ++i) y = g.sigmoid(y);
  g.backward(y);

  double v = x0, expected = 1.0;
  for (int i = 0; i < N; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    expected *= s * (1.0 - s);
    v = s;
  }
  CHECK(std::abs(g.grad(x).v[0] - expected) < 1e-10);
}

TEST_CASE("parameters not on a path to the loss get zero gradient") {
  ad::Graph g;
  const auto used = g.leaf(Tensor::scalar(2.0));
  const auto unused = g.leaf(Tensor({3}, {1, 2, 3}));
  const auto loss = g.mul(used, used);
  g.backward(loss);
  for (double v : g.grad(unused).v) CHECK(v == 0.0);
}

TEST_CASE("shape mismatch reports both shapes") {
  ad::Graph g;
  const auto a = g.leaf(Tensor({2}, {1, 2}));
  const auto b = g.leaf(Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("[2]"),
                       std::invalid_argument);
  try {
    g.add(a, b);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("[3]") != std::string::npos);
  }
}

TEST_CASE("non-finite results are rejected") {
  ad::Graph g;
  const auto x = g.leaf(Tensor::scalar(0.0));
  CHECK_THROWS_AS(g.log(x), std::runtime_error);
  const auto big = g.leaf(Tensor::scalar(1e308));
  CHECK_THROWS_AS(g.exp(big), std::runtime_error);
}

TEST_CASE("backward rejects a non-scalar loss") {
  ad::Graph g;
  const auto v = g.leaf(Tensor({2}, {1, 2}));
  CHECK_THROWS_AS(g.backward(v), std::invalid_argument);
}

TEST_CASE("every primitive op matches finite differences") {
  for (const auto& r : gradcheck::check_primitives(17)) {
    INFO(r.name);
    CHECK(r.worst_rel_err < 1e-6);
  }
}

TEST_CASE("the fault-injection hook is observable") {
  ad::corrupt_sigmoid_grad_for_tests = true;
  bool tripped = false;
  for (const auto& r : gradcheck::check_primitives(17))
    if (r.name == "sigmoid" && r.worst_rel_err > 1e-6) tripped = true;
  ad::corrupt_sigmoid_grad_for_tests = false;
  CHECK(tripped);
}

TEST_CASE("clip_global_norm scales and is idempotent") {
  GradMap g;
  g["a"] = Tensor({2}, {12.0, 0.0});
  g["b"] = Tensor({1}, {16.0});  // global norm 20
  const double norm = clip_global_norm(g, 10.0);
  CHECK(norm == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(g["a"].v[0] == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(g["b"].v[0] == doctest::Approx(8.0).epsilon(1e-15));

  GradMap once = g;
  const double norm2 = clip_global_norm(g, 10.0);
  CHECK(norm2 == doctest::Approx(10.0).epsilon(1e-12));
  for (const auto& [k, t] : once)
    for (std::size_t i = 0; i < t.numel(); ++i)
      CHECK(std::abs(g[k].v[i] - t.v[i]) < 1e-12);
}

TEST_CASE("clip_global_norm leaves small and zero gradients alone") {
  GradMap g;
  g["a"] = Tensor({2}, {3.0, 4.0});  // norm 5
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g["a"].v[0] == 3.0);
  CHECK(g["a"].v[1] == 4.0);

  GradMap z;
  z["a"] = Tensor({3});
  CHECK(clip_global_norm(z, 10.0) == 0.0);
  for (double v : z["a"].v) CHECK(v == 0.0);
}

TEST_CASE("first Adam step moves a parameter by about the learning rate") {
  ParamMap p;
  p["w"] = Tensor({1}, {1.0});
  AdamState st = AdamState::init(p, 0.003);
  GradMap g;
  g["w"] = Tensor({1}, {0.5});
  adam_step(p, g, st);
  CHECK(p["w"].v[0] == doctest::Approx(0.997).epsilon(1e-6));

  // second identical step has nearly the same magnitude
  const double before = p["w"].v[0];
  adam_step(p, g, st);
  const double second = before - p["w"].v[0];
  CHECK(std::abs(second - 0.003) / 0.003 < 0.01);
}

TEST_CASE("Adam with zero gradients is a no-op") {
  ParamMap p;
  p["w"] = Tensor({3}, {1.0, -2.0, 0.5});
  const ParamMap orig = p;
  AdamState st = AdamState::init(p, 0.003);
  GradMap g;
  g["w"] = Tensor({3});
  for (int i = 0; i < 5; ++i) adam_step(p, g, st);
  CHECK(p["w"].v == orig.at("w").v);
}

TEST_CASE("Adam skips parameters missing from the gradient map") {
  ParamMap p;
  p["a"] = Tensor({1}, {1.0});
  p["b"] = Tensor({1}, {2.0});
  AdamState st = AdamState::init(p, 0.01);
  GradMap g;
  g["a"] = Tensor({1}, {1.0});
  adam_step(p, g, st);
  CHECK(p["a"].v[0] != 1.0);
  CHECK(p["b"].v[0] == 2.0);
}
