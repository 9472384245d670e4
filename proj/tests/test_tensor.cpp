// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/tensor.hpp"

#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"

using namespace mst;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul against identity") {
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(7);
  std::vector<double> vals(3 * 5);
  for (double& v : vals) v = rng.normal();
  Tensor a({3, 5}, vals);
  Tensor out = matmul(eye, a);
  for (std::size_t i = 0; i < vals.size(); ++i) CHECK(out.at(i) == doctest::Approx(vals[i]));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor b({4, 5}, std::vector<double>(20, 1.0));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(2,3)"), NumericError);
}

TEST_CASE("softmax of a constant row is uniform") {
  Tensor x({1, 4}, {0, 0, 0, 0});
  Tensor y = softmax(x);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i) == doctest::Approx(0.25));
}

TEST_CASE("softmax rows sum to one and log_softmax matches its log") {
  Rng rng(11);
  std::vector<double> vals(6 * 9);
  for (double& v : vals) v = rng.uniform(-30.0, 30.0);
  Tensor x({6, 9}, vals);
  Tensor s = softmax(x);
  Tensor ls = log_softmax(x);
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 9; ++c) total += s.at(r * 9 + c);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  for (std::size_t i = 0; i < vals.size(); ++i) {
    CHECK(std::abs(std::log(s.at(i)) - ls.at(i)) < 1e-10);
  }
}

TEST_CASE("conv2d with an averaging kernel on a constant image") {
  // interior outputs must equal the constant; direct convolution oracle
  const double c = 0.7;
  Tensor img({1, 6, 5}, std::vector<double>(30, c));
  Tensor kernel({1, 1, 3, 3}, std::vector<double>(9, 1.0 / 9.0));
  Tensor bias({1}, {0.0});
  Tensor out = conv2d_3x3(img, kernel, bias);
  // oracle: brute force over all positions with zero padding
  for (std::size_t y = 0; y < 6; ++y) {
    for (std::size_t x = 0; x < 5; ++x) {
      double want = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int sy = static_cast<int>(y) + dy, sx = static_cast<int>(x) + dx;
          if (sy < 0 || sx < 0 || sy >= 6 || sx >= 5) continue;
          want += c / 9.0;
        }
      CHECK(out.at(y * 5 + x) == doctest::Approx(want));
      if (y > 0 && y < 5 && x > 0 && x < 4) CHECK(out.at(y * 5 + x) == doctest::Approx(c));
    }
  }
}

TEST_CASE("backward of sum is all ones") {
  Tape tape;
  auto storage = std::make_shared<TensorData>(TensorData{{2, 3}, {1, 2, 3, 4, 5, 6}});
  Tensor x = tape.leaf(storage);
  Tensor loss = sum(x);
  tape.backward(loss);
  for (double g : tape.grad(x)) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of sum of squares") {
  Tape tape;
  auto storage = std::make_shared<TensorData>(TensorData{{1, 2}, {1, 2}});
  Tensor x = tape.leaf(storage);
  Tensor loss = sum(mul(x, x));
  tape.backward(loss);
  std::vector<double> g = tape.grad(x);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(4.0));
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  auto storage = std::make_shared<TensorData>(TensorData{{1, 2}, {1, 2}});
  Tensor x = tape.leaf(storage);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), NumericError);
}

TEST_CASE("unreachable parameters get zero gradients") {
  Tape tape;
  auto a = std::make_shared<TensorData>(TensorData{{1, 2}, {1, 2}});
  auto b = std::make_shared<TensorData>(TensorData{{1, 2}, {3, 4}});
  Tensor ta = tape.leaf(a);
  Tensor tb = tape.leaf(b);
  Tensor loss = sum(ta);
  tape.backward(loss);
  for (double g : tape.grad(tb)) CHECK(g == 0.0);
}

TEST_CASE("non-finite op output aborts with the op name") {
  Tensor big({1, 2}, {1e308, 1e308});
  CHECK_THROWS_WITH_AS(add(big, big), doctest::Contains("add"), NumericError);
}

TEST_CASE("finite differences on simple closed forms") {
  auto f_sum = [](const std::vector<double>& x) {
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc;
  };
  std::vector<double> g = finite_diff_grad(f_sum, {0.3, -1.2, 4.0}, 1e-5);
  for (double v : g) CHECK(std::abs(v - 1.0) < 1e-9);

  auto f_sq = [](const std::vector<double>& x) { return x[0] * x[0]; };
  g = finite_diff_grad(f_sq, {3.0}, 1e-5);
  CHECK(std::abs(g[0] - 6.0) < 1e-8);
}

TEST_CASE("random three-layer composition matches finite differences") {
  Rng rng(3);
  ParamStore store;
  Parameter& w1 = testing::random_param(store, "w1", {4, 5}, rng);
  Parameter& w2 = testing::random_param(store, "w2", {5, 3}, rng);
  Parameter& x = testing::random_param(store, "x", {2, 4}, rng);
  auto builder = [&](Binding& bind) {
    Tensor h = tanh(matmul(bind(x), bind(w1)));
    Tensor o = sigmoid(matmul(h, bind(w2)));
    return sum(mul(o, o));
  };
  CHECK(testing::check_gradients(store, builder) < 1e-6);
}

TEST_CASE("gradients of every op pass finite-difference checks") {
  Rng seed_rng(17);
  for (int round = 0; round < 10; ++round) {
    Rng rng(seed_rng.bits());
    ParamStore store;
    Parameter& a = testing::random_param(store, "a", {3, 4}, rng);
    Parameter& b = testing::random_param(store, "b", {4, 3}, rng);
    Parameter& row = testing::random_param(store, "row", {1, 4}, rng);
    Parameter& img = testing::random_param(store, "img", {2, 5, 4}, rng);
    Parameter& ker = testing::random_param(store, "ker", {3, 2, 3, 3}, rng);
    Parameter& kbias = testing::random_param(store, "kbias", {3}, rng);
    Parameter& sig = testing::random_param(store, "sig", {6, 1}, rng);
    Parameter& k1d = testing::random_param(store, "k1d", {2, 3}, rng);

    auto builder = [&](Binding& bind) {
      Tensor t1 = matmul(bind(a), bind(b));                   // (3,3)
      Tensor t2 = add(bind(a), bind(row));                    // row broadcast
      Tensor t3 = mul(sub(bind(a), bind(row)), bind(a));      // (3,4)
      Tensor t4 = concat({slice(t3, 1, 0, 2), slice(t3, 1, 2, 4)}, 1);
      Tensor t5 = softmax(t4);
      Tensor t6 = log_softmax(transpose(t2));
      Tensor conv = relu(conv2d_3x3(bind(img), bind(ker), bind(kbias)));
      Tensor pooled = max_pool2d(conv);
      Tensor merged = merge_channels(pooled);
      Tensor c1 = conv1d_same(bind(sig), bind(k1d));
      Tensor parts = add(add(sum(t1), sum(t5)), add(sum(t6), sum(merged)));
      Tensor more = add(add(sum(c1), mean(t3)), sum(row_sums(tanh(t4))));
      Tensor picked = sum(pick_cols(t4, {0, 1, 3}));
      Tensor selected = sum(select_rows(bind(b), {0, 2, 2}));
      return add(add(parts, more), add(picked, selected));
    };
    CHECK(testing::check_gradients(store, builder) < 1e-4);
  }
}

TEST_CASE("tape replay is deterministic for a fixed seed") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    ParamStore store;
    Parameter& w = testing::random_param(store, "w", {4, 4}, rng);
    Tape tape;
    Binding bind(tape);
    Tensor loss = sum(tanh(matmul(bind(w), bind(w))));
    return loss.value();
  };
  CHECK(run(99) == run(99));
  CHECK(run(99) != run(100));
}

TEST_CASE("select_rows accumulates duplicate gradients") {
  Tape tape;
  auto storage = std::make_shared<TensorData>(TensorData{{3, 2}, {1, 2, 3, 4, 5, 6}});
  Tensor emb = tape.leaf(storage);
  Tensor picked = select_rows(emb, {1, 1});
  tape.backward(sum(picked));
  std::vector<double> g = tape.grad(emb);
  CHECK(g[2] == doctest::Approx(2.0));
  CHECK(g[3] == doctest::Approx(2.0));
  CHECK(g[0] == 0.0);
}

TEST_SUITE_END();
