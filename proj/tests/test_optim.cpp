// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/optim.hpp"

#include <cmath>

#include "doctest.h"

using namespace mst;

namespace {

Parameter make_param(const std::string& name, std::vector<double> values) {
  Parameter p;
  p.name = name;
  p.data = std::make_shared<TensorData>(
      TensorData{{values.size()}, std::move(values)});
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("optim");

TEST_CASE("adadelta leaves parameters unchanged on zero gradients") {
  Parameter p = make_param("w", {0.5, -0.25});
  Optimizer opt = Optimizer::adadelta({0.95, 1e-8});
  opt.step({&p}, {{0.0, 0.0}});
  CHECK(p.values()[0] == 0.5);
  CHECK(p.values()[1] == -0.25);
}

TEST_CASE("adadelta first step from zero state, hand-stepped") {
  // E[g^2] = 0.05, delta = -sqrt(eps / (0.05 + eps))
  const double rho = 0.95, eps = 1e-8;
  Parameter p = make_param("w", {1.0});
  Optimizer opt = Optimizer::adadelta({rho, eps});
  opt.step({&p}, {{1.0}});
  const double want = 1.0 - std::sqrt(eps / (0.05 + eps));
  CHECK(p.values()[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("adadelta second identical step moves at least as far") {
  // hand-stepped two-step recursion: the update accumulator grows
  const double rho = 0.95, eps = 1e-8;
  Parameter p = make_param("w", {1.0});
  Optimizer opt = Optimizer::adadelta({rho, eps});
  opt.step({&p}, {{1.0}});
  const double first = 1.0 - p.values()[0];

  // oracle
  double eg = 0.05;
  const double d1 = std::sqrt(eps / (eg + eps));
  double ed = (1.0 - rho) * d1 * d1;
  eg = rho * eg + (1.0 - rho);
  const double d2 = std::sqrt((ed + eps) / (eg + eps));

  const double before = p.values()[0];
  opt.step({&p}, {{1.0}});
  const double second = before - p.values()[0];
  CHECK(second == doctest::Approx(d2).epsilon(1e-12));
  CHECK(second >= first);
}

TEST_CASE("adam leaves parameters unchanged on zero gradients") {
  Parameter p = make_param("w", {2.0});
  Optimizer opt = Optimizer::adam({0.1, 0.9, 0.999, 1e-8});
  opt.step({&p}, {{0.0}});
  CHECK(p.values()[0] == 2.0);
}

TEST_CASE("adam first step equals the learning rate up to eps") {
  const double alpha = 0.1, eps = 1e-8;
  Parameter p = make_param("w", {0.0});
  Optimizer opt = Optimizer::adam({alpha, 0.9, 0.999, eps});
  opt.step({&p}, {{1.0}});
  // bias correction makes mhat = 1, vhat = 1 on the first step
  CHECK(p.values()[0] == doctest::Approx(-alpha / (1.0 + eps)).epsilon(1e-12));
}

TEST_CASE("adam is antisymmetric in the gradient sign") {
  Parameter p = make_param("w", {0.0, 0.0});
  Optimizer opt = Optimizer::adam({0.05, 0.9, 0.999, 1e-8});
  opt.step({&p}, {{1.0, -1.0}});
  CHECK(p.values()[0] == doctest::Approx(-p.values()[1]).epsilon(1e-12));
  CHECK(p.values()[0] < 0.0);
}

TEST_CASE("updates preserve parameter shapes and reject mismatches") {
  Parameter p = make_param("w", {1.0, 2.0, 3.0});
  Optimizer opt = Optimizer::adadelta({});
  CHECK_THROWS_AS(opt.step({&p}, {{1.0}}), NumericError);
  opt.step({&p}, {{0.1, 0.1, 0.1}});
  CHECK(p.shape() == Shape{3});
}

TEST_CASE("adam step count increases by one per update") {
  Parameter p = make_param("w", {0.0});
  Optimizer opt = Optimizer::adam({});
  CHECK(opt.steps() == 0);
  opt.step({&p}, {{0.5}});
  CHECK(opt.steps() == 1);
  opt.step({&p}, {{0.5}});
  CHECK(opt.steps() == 2);
}

TEST_CASE("weight decay enters as an additive gradient term") {
  Parameter p = make_param("w", {1.0});
  Parameter q = make_param("w", {1.0});
  Optimizer plain = Optimizer::adadelta({0.95, 1e-8});
  Optimizer decayed = Optimizer::adadelta({0.95, 1e-8}, 0.5);
  plain.step({&p}, {{1.5}});   // same effective gradient: 1.0 + 0.5 * 1.0
  decayed.step({&q}, {{1.0}});
  CHECK(p.values()[0] == doctest::Approx(q.values()[0]).epsilon(1e-12));
}

TEST_CASE("global norm clipping scales to the bound") {
  std::vector<std::vector<double>> grads = {{3.0, 0.0}, {0.0, 4.0}};
  const double norm = clip_global_norm(grads, 5.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(grads[0][0] == doctest::Approx(3.0));  // at the bound, untouched

  grads = {{6.0, 0.0}, {0.0, 8.0}};
  clip_global_norm(grads, 5.0);
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g) sq += v * v;
  CHECK(std::sqrt(sq) == doctest::Approx(5.0));
}

TEST_SUITE_END();
