// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/layers.hpp"

#include <algorithm>
#include <cmath>

namespace mst {

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool train) {
  if (!train || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

LstmParams LstmParams::create(ParamStore& store, const std::string& prefix,
                              std::size_t input, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.input_size = input;
  p.hidden_size = hidden;
  p.w_ih = &store.create(prefix + ".w_ih", {input, 4 * hidden}, rng);
  p.w_hh = &store.create(prefix + ".w_hh", {hidden, 4 * hidden}, rng);
  p.bias = &store.create_constant(prefix + ".bias", {1, 4 * hidden}, 0.0);
  // forget gate bias starts at 1 so early training does not flush the cell
  for (std::size_t i = hidden; i < 2 * hidden; ++i) p.bias->values()[i] = 1.0;
  return p;
}

LstmState lstm_initial_state(std::size_t hidden) {
  return {Tensor::zeros({1, hidden}), Tensor::zeros({1, hidden})};
}

LstmState lstm_step(Binding& bind, const LstmParams& p, const Tensor& x,
                    const LstmState& prev) {
  const std::size_t h = p.hidden_size;
  Tensor gates = add(add(matmul(x, bind(*p.w_ih)), matmul(prev.h, bind(*p.w_hh))),
                     bind(*p.bias));
  Tensor i = sigmoid(slice(gates, 1, 0, h));
  Tensor f = sigmoid(slice(gates, 1, h, 2 * h));
  Tensor g = tanh(slice(gates, 1, 2 * h, 3 * h));
  Tensor o = sigmoid(slice(gates, 1, 3 * h, 4 * h));
  Tensor c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

Tensor lstm_sequence(Binding& bind, const LstmParams& p, const Tensor& xs) {
  const std::size_t t = xs.rows();
  LstmState state = lstm_initial_state(p.hidden_size);
  std::vector<Tensor> rows;
  rows.reserve(t);
  for (std::size_t i = 0; i < t; ++i) {
    state = lstm_step(bind, p, slice(xs, 0, i, i + 1), state);
    rows.push_back(state.h);
  }
  return t == 1 ? rows[0] : concat(rows, 0);
}

BlstmStackParams BlstmStackParams::create(ParamStore& store, const std::string& prefix,
                                          std::size_t layers, std::size_t input,
                                          std::size_t hidden, Rng& rng) {
  BlstmStackParams p;
  p.hidden_size = hidden;
  std::size_t in = input;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    p.fwd.push_back(LstmParams::create(store, base + ".fwd", in, hidden, rng));
    p.bwd.push_back(LstmParams::create(store, base + ".bwd", in, hidden, rng));
    in = 2 * hidden;
  }
  return p;
}

Tensor blstm_forward(Binding& bind, const BlstmStackParams& p, const Tensor& frames,
                     double dropout_rate, Rng* rng, bool train) {
  if (frames.rank() != 2 || frames.rows() < 1) {
    throw NumericError("blstm_forward: expected non-empty (t,d) input, got shape " +
                       shape_str(frames.shape()));
  }
  Tensor x = frames;
  for (std::size_t l = 0; l < p.fwd.size(); ++l) {
    const std::size_t t = x.rows();
    LstmState fs = lstm_initial_state(p.hidden_size);
    LstmState bs = lstm_initial_state(p.hidden_size);
    std::vector<Tensor> fh(t), bh(t);
    for (std::size_t i = 0; i < t; ++i) {
      fs = lstm_step(bind, p.fwd[l], slice(x, 0, i, i + 1), fs);
      fh[i] = fs.h;
    }
    for (std::size_t i = t; i-- > 0;) {
      bs = lstm_step(bind, p.bwd[l], slice(x, 0, i, i + 1), bs);
      bh[i] = bs.h;
    }
    std::vector<Tensor> rows(t);
    for (std::size_t i = 0; i < t; ++i) rows[i] = concat({fh[i], bh[i]}, 1);
    x = t == 1 ? rows[0] : concat(rows, 0);
    if (train && rng && l + 1 < p.fwd.size()) x = dropout(x, dropout_rate, *rng, train);
  }
  return x;
}

VggBlockParams VggBlockParams::create(ParamStore& store, const std::string& prefix,
                                      std::size_t in_ch, std::size_t out_ch, Rng& rng) {
  VggBlockParams p;
  p.in_channels = in_ch;
  p.out_channels = out_ch;
  p.k1 = &store.create(prefix + ".k1", {out_ch, in_ch, 3, 3}, rng);
  p.b1 = &store.create_constant(prefix + ".b1", {out_ch}, 0.0);
  p.k2 = &store.create(prefix + ".k2", {out_ch, out_ch, 3, 3}, rng);
  p.b2 = &store.create_constant(prefix + ".b2", {out_ch}, 0.0);
  return p;
}

VggFrontParams VggFrontParams::create(ParamStore& store, const std::string& prefix,
                                      std::size_t ch1, std::size_t ch2, Rng& rng) {
  VggFrontParams p;
  p.block1 = VggBlockParams::create(store, prefix + ".vgg1", 1, ch1, rng);
  p.block2 = VggBlockParams::create(store, prefix + ".vgg2", ch1, ch2, rng);
  return p;
}

std::size_t VggFrontParams::output_frames(std::size_t t) { return ((t + 1) / 2 + 1) / 2; }

std::size_t VggFrontParams::output_dim(std::size_t feature_dim, std::size_t ch2) {
  return ch2 * output_frames(feature_dim);
}

namespace {

Tensor vgg_block(Binding& bind, const VggBlockParams& p, const Tensor& x) {
  Tensor y = relu(conv2d_3x3(x, bind(*p.k1), bind(*p.b1)));
  y = relu(conv2d_3x3(y, bind(*p.k2), bind(*p.b2)));
  return max_pool2d(y);
}

}  // namespace

Tensor vgg_front_forward(Binding& bind, const VggFrontParams& p, const Tensor& frames) {
  if (frames.rank() != 2) {
    throw NumericError("vgg_front_forward: expected (t,d) input, got shape " +
                       shape_str(frames.shape()));
  }
  if (frames.rows() < 4) {
    throw DataError("vgg_front_forward: need at least 4 frames, got " +
                    std::to_string(frames.rows()));
  }
  Tensor x = reshape(frames, {1, frames.rows(), frames.cols()});
  x = vgg_block(bind, p.block1, x);
  x = vgg_block(bind, p.block2, x);
  return merge_channels(x);
}

AttentionParams AttentionParams::create(ParamStore& store, const std::string& prefix,
                                        AttentionKind kind, std::size_t enc_dim,
                                        std::size_t dec_dim, std::size_t attn_dim,
                                        Rng& rng, std::size_t loc_channels,
                                        std::size_t loc_width) {
  AttentionParams p;
  p.kind = kind;
  p.w_enc = &store.create(prefix + ".w_enc", {enc_dim, attn_dim}, rng);
  p.w_dec = &store.create(prefix + ".w_dec", {dec_dim, attn_dim}, rng);
  p.bias = &store.create_constant(prefix + ".bias", {1, attn_dim}, 0.0);
  p.v = &store.create(prefix + ".v", {attn_dim, 1}, rng);
  if (kind == AttentionKind::Location) {
    p.loc_kernel = &store.create(prefix + ".loc_kernel", {loc_channels, loc_width}, rng);
    p.w_loc = &store.create(prefix + ".w_loc", {loc_channels, attn_dim}, rng);
  }
  return p;
}

AttendResult attend(Binding& bind, const AttentionParams& p, const Tensor& enc_states,
                    const Tensor& dec_state, const Tensor& prev_align) {
  Tensor pre = add(matmul(enc_states, bind(*p.w_enc)),
                   add(matmul(dec_state, bind(*p.w_dec)), bind(*p.bias)));
  if (p.kind == AttentionKind::Location) {
    if (!prev_align.defined()) {
      throw NumericError("attend: location scorer needs the previous alignment");
    }
    if (prev_align.rank() != 2 || prev_align.cols() != 1 ||
        prev_align.rows() != enc_states.rows()) {
      throw NumericError("attend: alignment shape " + shape_str(prev_align.shape()) +
                         " does not match encoder shape " + shape_str(enc_states.shape()));
    }
    Tensor feats = conv1d_same(prev_align, bind(*p.loc_kernel));
    pre = add(pre, matmul(feats, bind(*p.w_loc)));
  }
  Tensor energies = matmul(tanh(pre), bind(*p.v));  // (t,1)
  Tensor weights = softmax(transpose(energies));    // (1,t)
  Tensor context = matmul(weights, enc_states);     // (1,enc)
  return {weights, context};
}

Tensor label_smoothed_nll(const Tensor& logits, const std::vector<std::size_t>& targets,
                          double eps) {
  if (eps < 0.0 || eps >= 1.0) {
    throw NumericError("label_smoothed_nll: smoothing must lie in [0,1), got " +
                       std::to_string(eps));
  }
  const double vocab = static_cast<double>(logits.cols());
  Tensor lp = log_softmax(logits);
  Tensor picked = scale(pick_cols(lp, targets), -(1.0 - eps));
  Tensor spread = scale(row_sums(lp), -eps / vocab);
  return mean(add(picked, spread));
}

namespace {

struct CtcLattice {
  std::vector<std::size_t> ext;         // blank-interleaved labels, size 2u+1
  std::vector<std::vector<double>> alpha;  // (t, s) log space
  double log_prob = kLogZero;
};

CtcLattice ctc_forward_lattice(const std::vector<double>& lp, std::size_t t_len,
                               std::size_t k, const std::vector<std::size_t>& targets,
                               std::size_t blank) {
  CtcLattice lat;
  const std::size_t s_len = 2 * targets.size() + 1;
  lat.ext.resize(s_len, blank);
  for (std::size_t u = 0; u < targets.size(); ++u) lat.ext[2 * u + 1] = targets[u];
  lat.alpha.assign(t_len, std::vector<double>(s_len, kLogZero));
  lat.alpha[0][0] = lp[blank];
  if (s_len > 1) lat.alpha[0][1] = lp[lat.ext[1]];
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double acc = lat.alpha[t - 1][s];
      if (s >= 1) acc = log_add(acc, lat.alpha[t - 1][s - 1]);
      if (s >= 2 && lat.ext[s] != blank && lat.ext[s] != lat.ext[s - 2]) {
        acc = log_add(acc, lat.alpha[t - 1][s - 2]);
      }
      lat.alpha[t][s] = acc + lp[t * k + lat.ext[s]];
    }
  }
  lat.log_prob = lat.alpha[t_len - 1][s_len - 1];
  if (s_len > 1) lat.log_prob = log_add(lat.log_prob, lat.alpha[t_len - 1][s_len - 2]);
  return lat;
}

}  // namespace

Tensor ctc_loss(const Tensor& log_probs, const std::vector<std::size_t>& targets,
                std::size_t blank) {
  if (log_probs.rank() != 2) {
    throw NumericError("ctc_loss: expected (t,k) log-probs, got shape " +
                       shape_str(log_probs.shape()));
  }
  const std::size_t t_len = log_probs.rows(), k = log_probs.cols();
  if (targets.empty()) throw DataError("ctc_loss: empty target sequence");
  std::size_t repeats = 0;
  for (std::size_t u = 0; u < targets.size(); ++u) {
    if (targets[u] >= k) {
      throw NumericError("ctc_loss: target index " + std::to_string(targets[u]) +
                         " out of range for " + std::to_string(k) + " labels");
    }
    if (targets[u] == blank) throw DataError("ctc_loss: target contains the blank label");
    if (u > 0 && targets[u] == targets[u - 1]) ++repeats;
  }
  if (t_len < targets.size() + repeats) {
    throw DataError("ctc_loss: " + std::to_string(t_len) + " frames cannot emit " +
                    std::to_string(targets.size()) + " labels with " +
                    std::to_string(repeats) + " adjacent repeats");
  }

  CtcLattice lat = ctc_forward_lattice(log_probs.values(), t_len, k, targets, blank);
  const double loss = -lat.log_prob;

  Tape* tape = log_probs.tape();
  if (tape == nullptr) {
    check_finite("ctc_loss", {loss});
    return Tensor::scalar(loss);
  }
  Tensor lp_in = log_probs;
  return tape->record(
      "ctc_loss", {{1}, {loss}},
      [lp_in, targets, blank, t_len, k](Tape& tp, const std::vector<double>& g) {
        if (lp_in.node() < 0) return;
        const std::vector<double>& lp = lp_in.values();
        CtcLattice lat = ctc_forward_lattice(lp, t_len, k, targets, blank);
        const std::size_t s_len = lat.ext.size();
        // beta includes the emission at t, mirroring alpha
        std::vector<std::vector<double>> beta(t_len, std::vector<double>(s_len, kLogZero));
        beta[t_len - 1][s_len - 1] = lp[(t_len - 1) * k + lat.ext[s_len - 1]];
        if (s_len > 1) beta[t_len - 1][s_len - 2] = lp[(t_len - 1) * k + lat.ext[s_len - 2]];
        for (std::size_t t = t_len - 1; t-- > 0;) {
          for (std::size_t s = 0; s < s_len; ++s) {
            double acc = beta[t + 1][s];
            if (s + 1 < s_len) acc = log_add(acc, beta[t + 1][s + 1]);
            if (s + 2 < s_len && lat.ext[s + 2] != blank && lat.ext[s + 2] != lat.ext[s]) {
              acc = log_add(acc, beta[t + 1][s + 2]);
            }
            beta[t][s] = acc + lp[t * k + lat.ext[s]];
          }
        }
        // d(-logP)/d lp[t,k] = -exp(lse_{s: ext_s==k}(alpha+beta-lp) - logP)
        std::vector<double> grad(t_len * k, 0.0);
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t s = 0; s < s_len; ++s) {
            const std::size_t label = lat.ext[s];
            const double through = lat.alpha[t][s] + beta[t][s] - lp[t * k + label];
            if (through == kLogZero) continue;
            grad[t * k + label] += std::exp(through - lat.log_prob);
          }
        }
        for (double& v : grad) v = -v;
        tp.accumulate_scaled(lp_in.node(), grad, g[0]);
      });
}

Tensor joint_asr_loss(const Tensor& l_att, const Tensor& l_ctc, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) {
    throw NumericError("joint_asr_loss: interpolation weight must lie in [0,1], got " +
                       std::to_string(lambda));
  }
  return add(scale(l_att, 1.0 - lambda), scale(l_ctc, lambda));
}

}  // namespace mst
