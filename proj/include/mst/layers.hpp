// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mst/optim.hpp"
#include "mst/tensor.hpp"

namespace mst {

// Binds parameters to tape leaves for one forward pass, one leaf per
// parameter no matter how often it is used.
class Binding {
 public:
  explicit Binding(Tape& tape) : tape_(&tape) {}

  Tensor operator()(const Parameter& p) {
    auto it = cache_.find(p.data.get());
    if (it != cache_.end()) return it->second;
    Tensor leaf = tape_->leaf(p.data);
    cache_.emplace(p.data.get(), leaf);
    return leaf;
  }

  bool bound(const Parameter& p) const { return cache_.count(p.data.get()) > 0; }
  Tensor leaf_of(const Parameter& p) const { return cache_.at(p.data.get()); }
  Tape& tape() { return *tape_; }

 private:
  Tape* tape_;
  std::unordered_map<const TensorData*, Tensor> cache_;
};

// Inverted dropout on layer outputs; identity at eval time.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool train);

// ---- recurrent cells ------------------------------------------------------

// Fused gate layout along the last axis: input, forget, cell, output.
struct LstmParams {
  Parameter* w_ih = nullptr;  // (input, 4h)
  Parameter* w_hh = nullptr;  // (h, 4h)
  Parameter* bias = nullptr;  // (1, 4h); forget slice starts at 1
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;

  static LstmParams create(ParamStore& store, const std::string& prefix,
                           std::size_t input, std::size_t hidden, Rng& rng);
};

struct LstmState {
  Tensor h;  // (1, hidden)
  Tensor c;  // (1, hidden)
};

LstmState lstm_initial_state(std::size_t hidden);
LstmState lstm_step(Binding& bind, const LstmParams& p, const Tensor& x,
                    const LstmState& prev);

// xs:(t, input) -> (t, hidden), zero initial state
Tensor lstm_sequence(Binding& bind, const LstmParams& p, const Tensor& xs);

struct BlstmStackParams {
  std::vector<LstmParams> fwd;
  std::vector<LstmParams> bwd;
  std::size_t hidden_size = 0;

  static BlstmStackParams create(ParamStore& store, const std::string& prefix,
                                 std::size_t layers, std::size_t input,
                                 std::size_t hidden, Rng& rng);
};

// frames:(t, d) -> (t, 2*hidden); stacked layers consume the previous
// layer's output, with dropout between layers while training.
Tensor blstm_forward(Binding& bind, const BlstmStackParams& p, const Tensor& frames,
                     double dropout_rate = 0.0, Rng* rng = nullptr, bool train = false);

// ---- convolutional front-end ----------------------------------------------

struct VggBlockParams {
  Parameter* k1 = nullptr;  // (out, in, 3, 3)
  Parameter* b1 = nullptr;
  Parameter* k2 = nullptr;  // (out, out, 3, 3)
  Parameter* b2 = nullptr;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  static VggBlockParams create(ParamStore& store, const std::string& prefix,
                               std::size_t in_ch, std::size_t out_ch, Rng& rng);
};

struct VggFrontParams {
  VggBlockParams block1;
  VggBlockParams block2;

  static VggFrontParams create(ParamStore& store, const std::string& prefix,
                               std::size_t ch1, std::size_t ch2, Rng& rng);
  // flattened feature width after both blocks for a given input width
  static std::size_t output_dim(std::size_t feature_dim, std::size_t ch2);
  static std::size_t output_frames(std::size_t t);
};

// frames:(t, d), t >= 4 -> (ceil(ceil(t/2)/2), ch2 * ceil(ceil(d/2)/2))
Tensor vgg_front_forward(Binding& bind, const VggFrontParams& p, const Tensor& frames);

// ---- attention -------------------------------------------------------------

enum class AttentionKind { Additive, Location };

struct AttentionParams {
  AttentionKind kind = AttentionKind::Additive;
  Parameter* w_enc = nullptr;      // (enc, attn)
  Parameter* w_dec = nullptr;      // (dec, attn)
  Parameter* bias = nullptr;       // (1, attn)
  Parameter* v = nullptr;          // (attn, 1)
  Parameter* loc_kernel = nullptr;  // (channels, width), location only
  Parameter* w_loc = nullptr;       // (channels, attn), location only

  static AttentionParams create(ParamStore& store, const std::string& prefix,
                                AttentionKind kind, std::size_t enc_dim,
                                std::size_t dec_dim, std::size_t attn_dim, Rng& rng,
                                std::size_t loc_channels = 8, std::size_t loc_width = 11);
};

struct AttendResult {
  Tensor weights;  // (1, t), sums to 1
  Tensor context;  // (1, enc)
};

// prev_align:(t,1) is consumed only by the location scorer and is required
// there (pass uniform 1/t on the first step).
AttendResult attend(Binding& bind, const AttentionParams& p, const Tensor& enc_states,
                    const Tensor& dec_state, const Tensor& prev_align);

// ---- losses ----------------------------------------------------------------

// Mean over rows of -sum_v q_v log p_v with q = (1-eps)*onehot + eps/V.
Tensor label_smoothed_nll(const Tensor& logits, const std::vector<std::size_t>& targets,
                          double eps);

// Exact -log P over all blank-interleaved monotonic alignments, in log space.
// log_probs:(t, k) must be normalized rows; targets must avoid `blank` and
// satisfy t >= |targets| + adjacent-repeat count, else DataError.
Tensor ctc_loss(const Tensor& log_probs, const std::vector<std::size_t>& targets,
                std::size_t blank);

// (1-lambda)*l_att + lambda*l_ctc, lambda in [0,1]
Tensor joint_asr_loss(const Tensor& l_att, const Tensor& l_ctc, double lambda);

}  // namespace mst
