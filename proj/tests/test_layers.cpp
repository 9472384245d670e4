// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/layers.hpp"

#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"

using namespace mst;

TEST_SUITE_BEGIN("layers");

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double range = 0.5) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-range, range);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("lstm forget-gate bias starts at one") {
  Rng rng(1);
  ParamStore store;
  LstmParams p = LstmParams::create(store, "cell", 3, 4, rng);
  const auto& bias = p.bias->values();
  for (std::size_t i = 0; i < 4; ++i) CHECK(bias[i] == 0.0);
  for (std::size_t i = 4; i < 8; ++i) CHECK(bias[i] == 1.0);
  for (std::size_t i = 8; i < 16; ++i) CHECK(bias[i] == 0.0);
}

TEST_CASE("single-frame blstm forward half equals one lstm step") {
  Rng rng(5);
  ParamStore store;
  BlstmStackParams stack = BlstmStackParams::create(store, "enc", 1, 3, 4, rng);
  Tensor frame = random_tensor({1, 3}, rng);

  Tape tape;
  Binding bind(tape);
  Tensor out = blstm_forward(bind, stack, frame);
  CHECK(out.shape() == Shape{1, 8});

  LstmState step = lstm_step(bind, stack.fwd[0], frame, lstm_initial_state(4));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(out.at(i) == doctest::Approx(step.h.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("reversing blstm input swaps and reverses the direction halves") {
  Rng rng(6);
  ParamStore store;
  BlstmStackParams stack = BlstmStackParams::create(store, "enc", 1, 3, 4, rng);
  // tie the two directions so the swap is exact
  stack.bwd[0].w_ih->data->values = stack.fwd[0].w_ih->values();
  stack.bwd[0].w_hh->data->values = stack.fwd[0].w_hh->values();
  stack.bwd[0].bias->data->values = stack.fwd[0].bias->values();
  const std::size_t t = 5;
  Tensor frames = random_tensor({t, 3}, rng);
  std::vector<double> rev(frames.values().size());
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < 3; ++j) rev[i * 3 + j] = frames.at((t - 1 - i) * 3 + j);
  }
  Tensor reversed({t, 3}, rev);

  // run both orientations and compare
  Tape tape;
  Binding bind(tape);
  Tensor a = blstm_forward(bind, stack, frames);
  Tensor b = blstm_forward(bind, stack, reversed);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(a.at(i * 8 + j) == doctest::Approx(b.at((t - 1 - i) * 8 + 4 + j)).epsilon(1e-12));
      CHECK(a.at(i * 8 + 4 + j) == doctest::Approx(b.at((t - 1 - i) * 8 + j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("blstm gradients match finite differences") {
  Rng rng(7);
  ParamStore store;
  BlstmStackParams stack = BlstmStackParams::create(store, "enc", 2, 3, 3, rng);
  Parameter& input = testing::random_param(store, "zz_input", {4, 3}, rng);
  auto builder = [&](Binding& bind) {
    return sum(blstm_forward(bind, stack, bind(input)));
  };
  CHECK(testing::check_gradients(store, builder) < 1e-4);
}

TEST_CASE("vgg front halves time twice with ceiling") {
  Rng rng(8);
  ParamStore store;
  VggFrontParams vgg = VggFrontParams::create(store, "enc", 2, 3, rng);
  for (std::size_t t : {4, 7, 9, 100, 511, 512}) {
    Tape tape;
    Binding bind(tape);
    Tensor frames = random_tensor({t, 6}, rng);
    Tensor out = vgg_front_forward(bind, vgg, frames);
    const std::size_t want = ((t + 1) / 2 + 1) / 2;
    CHECK(out.rows() == want);
    CHECK(out.cols() == 3 * 2);  // ch2 * ceil(ceil(6/2)/2)
  }
  CHECK(VggFrontParams::output_frames(100) == 25);
  CHECK(VggFrontParams::output_frames(7) == 2);
}

TEST_CASE("vgg front rejects fewer than four frames") {
  Rng rng(9);
  ParamStore store;
  VggFrontParams vgg = VggFrontParams::create(store, "enc", 2, 2, rng);
  Tape tape;
  Binding bind(tape);
  Tensor frames = random_tensor({3, 6}, rng);
  CHECK_THROWS_AS(vgg_front_forward(bind, vgg, frames), DataError);
}

TEST_CASE("vgg convolution output is constant in the interior for constant input") {
  Rng rng(10);
  ParamStore store;
  VggFrontParams vgg = VggFrontParams::create(store, "enc", 2, 2, rng);
  Tape tape;
  Binding bind(tape);
  Tensor img = Tensor::full({1, 8, 8}, 0.3);
  Tensor pre = conv2d_3x3(img, bind(*vgg.block1.k1), bind(*vgg.block1.b1));
  const double ref = pre.at(1 * 8 + 1);
  for (std::size_t y = 1; y < 7; ++y)
    for (std::size_t x = 1; x < 7; ++x)
      CHECK(pre.at(y * 8 + x) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("vgg front gradients match finite differences") {
  // seed chosen so no pooling window has a near-tie within the probe step
  Rng rng(12);
  ParamStore store;
  VggFrontParams vgg = VggFrontParams::create(store, "enc", 2, 2, rng);
  Parameter& input = testing::random_param(store, "zz_input", {5, 4}, rng);
  auto builder = [&](Binding& bind) {
    return sum(vgg_front_forward(bind, vgg, bind(input)));
  };
  CHECK(testing::check_gradients(store, builder) < 1e-4);
}

TEST_CASE("attention over a single frame collapses to that frame") {
  Rng rng(12);
  ParamStore store;
  AttentionParams attn =
      AttentionParams::create(store, "attn", AttentionKind::Additive, 4, 3, 5, rng);
  Tape tape;
  Binding bind(tape);
  Tensor enc = random_tensor({1, 4}, rng);
  Tensor dec = random_tensor({1, 3}, rng);
  AttendResult r = attend(bind, attn, enc, dec, Tensor());
  CHECK(r.weights.at(0) == doctest::Approx(1.0));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.context.at(i) == doctest::Approx(enc.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("zeroed scoring vector yields uniform weights and the mean state") {
  Rng rng(13);
  ParamStore store;
  AttentionParams attn =
      AttentionParams::create(store, "attn", AttentionKind::Additive, 4, 3, 5, rng);
  for (double& v : attn.v->values()) v = 0.0;
  Tape tape;
  Binding bind(tape);
  const std::size_t t = 6;
  Tensor enc = random_tensor({t, 4}, rng);
  Tensor dec = random_tensor({1, 3}, rng);
  AttendResult r = attend(bind, attn, enc, dec, Tensor());
  for (std::size_t i = 0; i < t; ++i) {
    CHECK(r.weights.at(i) == doctest::Approx(1.0 / t).epsilon(1e-12));
  }
  for (std::size_t j = 0; j < 4; ++j) {
    double mean_j = 0.0;
    for (std::size_t i = 0; i < t; ++i) mean_j += enc.at(i * 4 + j) / t;
    CHECK(r.context.at(j) == doctest::Approx(mean_j).epsilon(1e-10));
  }
}

TEST_CASE("attention weights sum to one for both scorers across lengths") {
  Rng rng(14);
  ParamStore store;
  AttentionParams add_attn =
      AttentionParams::create(store, "add", AttentionKind::Additive, 4, 3, 5, rng);
  AttentionParams loc_attn = AttentionParams::create(
      store, "loc", AttentionKind::Location, 4, 3, 5, rng, 4, 5);
  for (std::size_t t : {1, 2, 3, 8, 33}) {
    Tape tape;
    Binding bind(tape);
    Tensor enc = random_tensor({t, 4}, rng, 2.0);
    Tensor dec = random_tensor({1, 3}, rng, 2.0);
    Tensor align = Tensor::full({t, 1}, 1.0 / static_cast<double>(t));
    for (const AttentionParams* attn : {&add_attn, &loc_attn}) {
      AttendResult r = attend(bind, *attn, enc, dec, align);
      double total = 0.0;
      for (std::size_t i = 0; i < t; ++i) total += r.weights.at(i);
      CHECK(std::abs(total - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("location features shift along with the previous alignment") {
  // direct 1-d convolution oracle plus the shift property away from edges
  Rng rng(15);
  ParamStore store;
  Parameter& kernel = testing::random_param(store, "k", {2, 3}, rng);
  const std::size_t t = 9;
  std::vector<double> align(t, 0.0);
  align[3] = 1.0;
  std::vector<double> shifted(t, 0.0);
  shifted[4] = 1.0;

  Tape tape;
  Binding bind(tape);
  Tensor f1 = conv1d_same(Tensor({t, 1}, align), bind(kernel));
  Tensor f2 = conv1d_same(Tensor({t, 1}, shifted), bind(kernel));
  for (std::size_t i = 1; i + 1 < t; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(f2.at((i + 1) * 2 + c) == doctest::Approx(f1.at(i * 2 + c)).epsilon(1e-12));
    }
  }
  // oracle at the spike position: out[i][c] = sum_d k[c][d] * x[i + d - 1]
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(f1.at(3 * 2 + c) == doctest::Approx(kernel.values()[c * 3 + 1]).epsilon(1e-12));
    CHECK(f1.at(2 * 2 + c) == doctest::Approx(kernel.values()[c * 3 + 2]).epsilon(1e-12));
    CHECK(f1.at(4 * 2 + c) == doctest::Approx(kernel.values()[c * 3 + 0]).epsilon(1e-12));
  }
}

TEST_CASE("attention gradients match finite differences for both scorers") {
  for (AttentionKind kind : {AttentionKind::Additive, AttentionKind::Location}) {
    Rng rng(16);
    ParamStore store;
    AttentionParams attn = AttentionParams::create(store, "attn", kind, 4, 3, 5, rng, 3, 5);
    Parameter& enc = testing::random_param(store, "zz_enc", {6, 4}, rng);
    Parameter& dec = testing::random_param(store, "zz_dec", {1, 3}, rng);
    auto builder = [&](Binding& bind) {
      Tensor align = Tensor::full({6, 1}, 1.0 / 6.0);
      AttendResult r = attend(bind, attn, bind(enc), bind(dec), align);
      return add(sum(mul(r.context, r.context)), sum(mul(r.weights, r.weights)));
    };
    CHECK(testing::check_gradients(store, builder) < 1e-4);
  }
}

TEST_CASE("label smoothing reduces to cross entropy at zero") {
  Rng rng(17);
  Tensor logits = random_tensor({1, 5}, rng, 2.0);
  Tensor loss = label_smoothed_nll(logits, {2}, 0.0);
  Tensor lp = log_softmax(logits);
  CHECK(loss.value() == doctest::Approx(-lp.at(2)).epsilon(1e-12));
}

TEST_CASE("uniform logits give log V for any smoothing") {
  Tensor logits({1, 7}, std::vector<double>(7, 1.3));
  for (double eps : {0.0, 0.1, 0.5, 0.9}) {
    Tensor loss = label_smoothed_nll(logits, {4}, eps);
    CHECK(loss.value() == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  }
}

TEST_CASE("hand-computed two-class smoothed loss") {
  Tensor logits({1, 2}, {std::log(3.0), 0.0});
  Tensor loss = label_smoothed_nll(logits, {0}, 0.1);
  const double want = 0.95 * std::log(4.0 / 3.0) + 0.05 * std::log(4.0);
  CHECK(loss.value() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("label smoothing rejects bad targets and epsilon") {
  Tensor logits({1, 3}, {0.0, 0.0, 0.0});
  CHECK_THROWS_AS(label_smoothed_nll(logits, {3}, 0.1), NumericError);
  CHECK_THROWS_AS(label_smoothed_nll(logits, {0}, 1.0), NumericError);
}

TEST_CASE("smoothed loss is minimized by the smoothed target distribution") {
  // descend on the logits until the gradient vanishes, then compare softmax
  const std::size_t v = 4;
  const double eps = 0.2;
  auto storage = std::make_shared<TensorData>(TensorData{{1, v}, {0.1, -0.2, 0.3, 0.0}});
  for (int iter = 0; iter < 20000; ++iter) {
    Tape tape;
    Tensor logits = tape.leaf(storage);
    Tensor loss = label_smoothed_nll(logits, {1}, eps);
    tape.backward(loss);
    std::vector<double> g = tape.grad(logits);
    double norm = 0.0;
    for (double x : g) norm += x * x;
    if (std::sqrt(norm) < 1e-7) break;
    for (std::size_t i = 0; i < v; ++i) storage->values[i] -= 2.0 * g[i];
  }
  Tape tape;
  Tensor probs = softmax(tape.leaf(storage));
  for (std::size_t i = 0; i < v; ++i) {
    const double q = (i == 1 ? 1.0 - eps : 0.0) + eps / static_cast<double>(v);
    CHECK(probs.at(i) == doctest::Approx(q).epsilon(1e-5));
  }
}

TEST_CASE("joint loss interpolates exactly") {
  Tensor att = Tensor::scalar(2.0);
  Tensor ctc = Tensor::scalar(4.0);
  CHECK(joint_asr_loss(att, ctc, 0.0).value() == 2.0);
  CHECK(joint_asr_loss(att, ctc, 1.0).value() == 4.0);
  CHECK(joint_asr_loss(att, ctc, 0.3).value() == doctest::Approx(2.6).epsilon(1e-15));
  CHECK_THROWS_AS(joint_asr_loss(att, ctc, 1.5), NumericError);
  CHECK_THROWS_AS(joint_asr_loss(att, ctc, -0.1), NumericError);
}

TEST_CASE("dropout is the identity at eval time and rescales when training") {
  Rng rng(18);
  Tensor x = Tensor::full({4, 4}, 1.0);
  Tensor same = dropout(x, 0.5, rng, false);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.at(i) == 1.0);
  Tensor dropped = dropout(x, 0.5, rng, true);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK((dropped.at(i) == 0.0 || dropped.at(i) == doctest::Approx(2.0)));
  }
}

TEST_SUITE_END();
