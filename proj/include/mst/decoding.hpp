// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mst/models.hpp"

namespace mst {

// Incremental next-token model over a fixed vocabulary. start() yields the
// distribution of the first token; advance() consumes one token.
class SequenceScorer {
 public:
  struct Step {
    std::shared_ptr<const void> state;
    std::vector<double> log_probs;
  };

  virtual ~SequenceScorer() = default;
  virtual Step start() = 0;
  virtual Step advance(const Step& prev, std::size_t token) = 0;
  virtual std::size_t vocab_size() const = 0;
};

// Incremental prefix probabilities over a fixed (t, k) log-prob matrix:
// P(prefix...) marginalizes all paths whose collapsed output begins with the
// prefix, split into ending-in-blank and ending-in-label parts per frame.
class CtcPrefixScorer {
 public:
  CtcPrefixScorer(std::vector<double> log_probs, std::size_t frames, std::size_t labels,
                  std::size_t blank);

  struct State {
    std::vector<double> ending_label;  // log gamma_n per frame
    std::vector<double> ending_blank;  // log gamma_b per frame
    double prefix_score = 0.0;         // log P(prefix...)
    int last = -1;
  };

  State start() const;
  State extend(const State& state, std::size_t token) const;
  // log P(prefix exactly), for hypotheses that finish here
  double complete_score(const State& state) const;

  std::size_t frames() const { return frames_; }
  std::size_t labels() const { return labels_; }

 private:
  double lp(std::size_t t, std::size_t k) const { return log_probs_[t * labels_ + k]; }
  std::vector<double> log_probs_;
  std::size_t frames_;
  std::size_t labels_;
  std::size_t blank_;
};

// One-shot form: folds extend() from the empty prefix. Infeasible prefixes
// yield -inf rather than an exception.
double ctc_prefix_score(const Tensor& log_probs, const std::vector<std::size_t>& prefix,
                        std::size_t blank);

struct BeamConfig {
  std::size_t width = 10;
  double max_len_ratio = 1.5;
  double ctc_weight = 0.0;
  double lm_weight = 0.0;
  double length_penalty = 0.0;  // additive per emitted token
  std::size_t nbest = 1;
};

struct Hypothesis {
  std::vector<std::size_t> tokens;  // emitted tokens, <eos> excluded
  double att_score = 0.0;
  double ctc_score = 0.0;
  double lm_score = 0.0;
  bool complete = false;
  bool truncated = false;  // best incomplete returned because nothing finished

  double combined(const BeamConfig& cfg) const {
    return att_score + cfg.ctc_weight * ctc_score + cfg.lm_weight * lm_score +
           cfg.length_penalty * static_cast<double>(tokens.size());
  }
};

// Left-to-right expansion pruned to `width` by combined score; finished
// hypotheses are set aside and ranked at the end. Equal scores break toward
// the lexicographically smaller token sequence.
std::vector<Hypothesis> beam_search(SequenceScorer& scorer, const BeamConfig& cfg,
                                    std::size_t eos, std::size_t max_len,
                                    const std::vector<std::size_t>& banned = {},
                                    SequenceScorer* lm = nullptr,
                                    const CtcPrefixScorer* ctc = nullptr);

// Argmax per step until <eos> or max_len; equals beam width 1 when no
// fusion or penalty terms are active.
std::vector<std::size_t> greedy_decode(SequenceScorer& scorer, std::size_t eos,
                                       std::size_t max_len,
                                       const std::vector<std::size_t>& banned = {});

// ---- model adapters ----------------------------------------------------------

// Decodes one utterance with task-appropriate start token, banned-token set
// and fusion scorers. `lm` applies to ASR only; `force_target_lang`
// overrides the utterance's target language for ST/NMT.
std::vector<Hypothesis> decode_utterance(Model& model, const Utterance& utt,
                                         const BeamConfig& cfg, RnnLm* lm = nullptr,
                                         const std::string& force_target_lang = "");

std::vector<std::size_t> greedy_decode_utterance(Model& model, const Utterance& utt,
                                                 double max_len_ratio = 1.5,
                                                 const std::string& force_target_lang = "");

// ---- n-best records -----------------------------------------------------------
// id <TAB> rank <TAB> text <TAB> combined <TAB> att <TAB> ctc <TAB> lm <TAB> penalty

struct NbestRecord {
  std::string id;
  std::size_t rank = 0;
  std::string text;
  double combined = 0.0;
  double att = 0.0;
  double ctc = 0.0;
  double lm = 0.0;
  double penalty = 0.0;
};

void write_nbest(const std::string& path, const std::vector<NbestRecord>& records);
std::vector<NbestRecord> read_nbest(const std::string& path);

}  // namespace mst
