#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "fedaugmix/errors.hpp"
#include "fedaugmix/optim.hpp"
#include "fedaugmix/tensor.hpp"
#include "random_program.hpp"
#include "test_support.hpp"

using namespace fam;
using fam::testing::first_mismatch;
using fam::testing::make_program;
using fam::testing::RandomProgram;
using fam::testing::random_tensor;

TEST_CASE("forward examples") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 1}, {1, 1});
  CHECK(matmul(a, b).to_vector() == std::vector<double>{3, 7});
  CHECK(matmul(a, b).shape() == Shape{2, 1});

  const auto s = softmax(Tensor({2}, {0, 0}));
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));

  CHECK(relu(Tensor({2}, {-1, 2})).to_vector() == std::vector<double>{0, 2});
}

TEST_CASE("shape and domain errors") {
  const Tensor a({2, 3}, std::vector<double>(6, 1.0));
  const Tensor b({2, 3}, std::vector<double>(6, 1.0));
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  try {
    matmul(a, b);
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, Tensor({4}, {1, 2, 3, 4})), DimensionError);
  CHECK_THROWS_AS(log(Tensor({2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(log(Tensor({1}, {-2.0})), DomainError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), DimensionError);
}

TEST_CASE("row-wise bias broadcast") {
  const Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor bias({3}, {10, 20, 30});
  CHECK(add(x, bias).to_vector() == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(sum_to(x, {3}).to_vector() == std::vector<double>{5, 7, 9});
  CHECK(sum_to(x, {2, 1}).to_vector() == std::vector<double>{6, 15});
}

TEST_CASE("backward analytic examples") {
  Graph g;
  const Tensor w = g.leaf(Tensor::scalar(3.0));
  const Tensor x = g.leaf(Tensor::scalar(2.0));
  const Tensor wx = mul(w, x);
  const Tensor f = mul(wx, wx);
  const auto dw = backward(g, f, {w}, true);
  CHECK(dw[0].item() == doctest::Approx(24.0));
  CHECK(dw[0].attached());
  const auto dxdw = backward(g, dw[0], {x});
  CHECK(dxdw[0].item() == doctest::Approx(24.0));
}

TEST_CASE("backward errors") {
  Graph g;
  const Tensor x = g.leaf(Tensor({2}, {1.0, 2.0}));
  const Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(g, y, {x}), RankError);
  const Tensor loose = Tensor::scalar(1.0);
  CHECK_THROWS_AS(backward(g, sum(y), {loose}), UnreachableError);
  Graph other;
  const Tensor z = other.leaf(Tensor::scalar(1.0));
  CHECK_THROWS_AS(backward(g, sum(y), {z}), UnreachableError);
  CHECK_THROWS_AS(add(x, z), UnreachableError);
}

TEST_CASE("independent graph tensor gets zero gradient") {
  Graph g;
  const Tensor x = g.leaf(Tensor({2}, {1.0, 2.0}));
  const Tensor unused = g.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
  const auto grads = backward(g, sum(x), {x, unused});
  CHECK(grads[1].to_vector() == std::vector<double>{0, 0, 0});
  CHECK(grads[0].to_vector() == std::vector<double>{1, 1});
}

TEST_CASE("finite difference oracle examples") {
  auto square = [](const Tensor& x) { return mul(x, x); };
  const auto g = finite_difference_grad(square, Tensor::scalar(3.0), 1e-4);
  CHECK(std::fabs(g.item() - 6.0) < 1e-6);

  auto relu_sum = [](const Tensor& x) { return sum(relu(x)); };
  const auto r = finite_difference_grad(relu_sum, Tensor({2}, {-1.0, 2.0}), 1e-4);
  CHECK(r[0] == doctest::Approx(0.0));
  CHECK(r[1] == doctest::Approx(1.0));

  CHECK_THROWS_AS(finite_difference_grad(square, Tensor({2}, {1.0, 2.0}), 1e-4), RankError);
  CHECK_THROWS_AS(finite_difference_grad(square, Tensor::scalar(1.0), 0.0), DomainError);
}

TEST_CASE("backward matches finite differences on 100 random graphs") {
  std::mt19937_64 rng(20241016);
  int checked = 0;
  while (checked < 100) {
    const RandomProgram program = make_program(rng);
    const Tensor x0 = random_tensor(program.input_shape, rng, -2.0, 2.0);
    bool kink = false;
    auto f = [&](const Tensor& x) { return program(x, kink); };
    f(x0);
    if (kink) continue;
    const Tensor fd = finite_difference_grad(f, x0, 1e-4);
    if (kink) continue;  // a perturbed evaluation crossed a kink

    Graph g;
    const Tensor x = g.leaf(x0);
    bool dummy = false;
    const Tensor out = program(x, dummy);
    const Tensor grad = backward(g, out, {x})[0];
    INFO("program " << checked << " ops=" << program.ops.size());
    CHECK(first_mismatch(grad, fd, 1e-4, 1e-7) == -1);
    ++checked;
  }
}

TEST_CASE("create_graph does not change first-order gradients") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const RandomProgram program = make_program(rng);
    const Tensor x0 = random_tensor(program.input_shape, rng, -2.0, 2.0);
    bool kink = false;
    Graph g1, g2;
    const Tensor x1 = g1.leaf(x0);
    const Tensor x2 = g2.leaf(x0);
    const auto a = backward(g1, program(x1, kink), {x1}, false)[0];
    const auto b = backward(g2, program(x2, kink), {x2}, true)[0];
    CHECK(a.to_vector() == b.to_vector());
    CHECK_FALSE(a.attached());
  }
}

TEST_CASE("double backprop through (w*x)^2 is exact") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double w0 = u(rng), x0 = u(rng);
    Graph g;
    const Tensor w = g.leaf(Tensor::scalar(w0));
    const Tensor x = g.leaf(Tensor::scalar(x0));
    const Tensor wx = mul(w, x);
    const Tensor dfdw = backward(g, mul(wx, wx), {w}, true)[0];
    const double mixed = backward(g, dfdw, {x})[0].item();
    CHECK(std::fabs(mixed - 4.0 * w0 * x0) <= 1e-12 * std::max(1.0, std::fabs(4.0 * w0 * x0)));
  }
}

TEST_CASE("second derivatives of smooth ops match finite differences of first derivatives") {
  std::mt19937_64 rng(11);
  const Tensor w0 = random_tensor({3, 2}, rng);
  const Tensor x0 = random_tensor({2, 3}, rng);
  // h(x) = sum(dL/dw * c) where L = sum(log_softmax(sigmoid(x w))^2)
  const Tensor c = random_tensor({3, 2}, rng);
  auto first = [&](const Tensor& x, Graph& g, bool create) {
    const Tensor w = g.leaf(w0);
    const Tensor xa = x.attached() ? x : g.leaf(x);
    const Tensor z = log_softmax(sigmoid(matmul(xa, w)));
    return backward(g, sum(mul(z, z)), {w}, create)[0];
  };
  auto h = [&](const Tensor& x) {
    Graph g;
    return sum(mul(first(x, g, false), c));
  };
  Graph g;
  const Tensor x = g.leaf(x0);
  const Tensor dw = first(x, g, true);
  const Tensor grad = backward(g, sum(mul(dw, c)), {x})[0];
  const Tensor fd = finite_difference_grad(h, x0, 1e-5);
  CHECK(first_mismatch(grad, fd, 1e-5, 1e-8) == -1);
}

TEST_CASE("softmax rows are normalized") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Tensor p = softmax(random_tensor({3, 7}, rng, -20.0, 20.0));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(p[r * 7 + j] >= 0.0);
        s += p[r * 7 + j];
      }
      CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("random 3-layer MLP cross-entropy gradient") {
  std::mt19937_64 rng(42);
  std::vector<Tensor> params = {random_tensor({5, 4}, rng), random_tensor({4}, rng),
                                random_tensor({4, 4}, rng), random_tensor({4}, rng),
                                random_tensor({4, 3}, rng), random_tensor({3}, rng)};
  const Tensor x = random_tensor({6, 5}, rng);
  const Tensor onehot({6, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto loss = [&](const std::vector<Tensor>& p) {
    Tensor h = sigmoid(add(matmul(x, p[0]), p[1]));
    h = sigmoid(add(matmul(h, p[2]), p[3]));
    const Tensor lp = log_softmax(add(matmul(h, p[4]), p[5]));
    return scalar_mul(sum(mul(lp, onehot)), -1.0 / 6.0);
  };
  Graph g;
  std::vector<Tensor> attached;
  for (const auto& p : params) attached.push_back(g.leaf(p));
  const auto grads = backward(g, loss(attached), attached);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto f = [&](const Tensor& v) {
      auto p = params;
      p[i] = v;
      return loss(p);
    };
    const Tensor fd = finite_difference_grad(f, params[i], 1e-4);
    CHECK(first_mismatch(grads[i], fd, 1e-4, 1e-8) == -1);
  }
}

TEST_CASE("adam first step with unit gradient moves by lr") {
  std::vector<Tensor> p = {Tensor::scalar(1.0)};
  AdamState state;
  adam_step(p, {Tensor::scalar(1.0)}, state, AdamConfig{0.1});
  CHECK(p[0].item() == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(state.t == 1);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  std::vector<Tensor> p = {Tensor({2}, {0.3, -0.7})};
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(p, {Tensor::zeros({2})}, state, AdamConfig{0.1});
  CHECK(p[0].to_vector() == std::vector<double>{0.3, -0.7});
}

TEST_CASE("adam sign flip shrinks the second update") {
  // Hand-evaluated recurrences: m2 = -0.01, v2 = 0.001999, corrections 0.19 and 0.001999,
  // so the second update is +0.1 * (0.01 / 0.19) / (1 + 1e-8).
  std::vector<Tensor> p = {Tensor::scalar(0.0)};
  AdamState state;
  adam_step(p, {Tensor::scalar(1.0)}, state, AdamConfig{0.1});
  const double after_first = p[0].item();
  adam_step(p, {Tensor::scalar(-1.0)}, state, AdamConfig{0.1});
  const double second = p[0].item() - after_first;
  CHECK(std::fabs(second) < 0.1);
  CHECK(second == doctest::Approx(0.1 * (0.01 / 0.19) / (1.0 + 1e-8)).epsilon(1e-9));
}

TEST_CASE("adam rejects misaligned shapes") {
  std::vector<Tensor> p = {Tensor({2}, {0.0, 0.0})};
  AdamState state;
  CHECK_THROWS_AS(adam_step(p, {Tensor({3}, {1, 1, 1})}, state, AdamConfig{}), DimensionError);
  CHECK_THROWS_AS(adam_step(p, {}, state, AdamConfig{}), DimensionError);
}
