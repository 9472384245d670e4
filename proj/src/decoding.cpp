// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mst {

CtcPrefixScorer::CtcPrefixScorer(std::vector<double> log_probs, std::size_t frames,
                                 std::size_t labels, std::size_t blank)
    : log_probs_(std::move(log_probs)), frames_(frames), labels_(labels), blank_(blank) {
  if (log_probs_.size() != frames_ * labels_) {
    throw NumericError("ctc prefix scorer: " + std::to_string(log_probs_.size()) +
                       " values for " + std::to_string(frames_) + "x" +
                       std::to_string(labels_));
  }
}

CtcPrefixScorer::State CtcPrefixScorer::start() const {
  State s;
  s.ending_label.assign(frames_, kLogZero);
  s.ending_blank.assign(frames_, 0.0);
  double acc = 0.0;
  for (std::size_t t = 0; t < frames_; ++t) {
    acc += lp(t, blank_);
    s.ending_blank[t] = acc;  // all-blank paths
  }
  s.prefix_score = 0.0;  // every path extends the empty prefix
  s.last = -1;
  return s;
}

CtcPrefixScorer::State CtcPrefixScorer::extend(const State& state, std::size_t token) const {
  if (token >= labels_ || token == blank_) {
    throw NumericError("ctc prefix scorer: cannot extend with label " +
                       std::to_string(token));
  }
  State next;
  next.ending_label.assign(frames_, kLogZero);
  next.ending_blank.assign(frames_, kLogZero);
  next.last = static_cast<int>(token);

  const bool repeat = state.last == static_cast<int>(token);
  double psi = kLogZero;
  for (std::size_t t = 0; t < frames_; ++t) {
    // phi(t): paths realizing the old prefix just before frame t emits `token`
    double phi;
    if (t == 0) {
      phi = state.last == -1 ? 0.0 : kLogZero;
    } else {
      phi = state.ending_blank[t - 1];
      if (!repeat) phi = log_add(phi, state.ending_label[t - 1]);
    }
    const double emit = lp(t, token);
    const double prev_label = t == 0 ? kLogZero : next.ending_label[t - 1];
    next.ending_label[t] = log_add(prev_label, phi) + emit;
    const double prev_blank = t == 0 ? kLogZero : next.ending_blank[t - 1];
    const double from_label = t == 0 ? kLogZero : next.ending_label[t - 1];
    next.ending_blank[t] = log_add(prev_blank, from_label) + lp(t, blank_);
    psi = log_add(psi, phi + emit);
  }
  next.prefix_score = psi;
  return next;
}

double CtcPrefixScorer::complete_score(const State& state) const {
  if (state.last == -1) {
    return state.ending_blank[frames_ - 1];  // empty output = all blanks
  }
  return log_add(state.ending_label[frames_ - 1], state.ending_blank[frames_ - 1]);
}

double ctc_prefix_score(const Tensor& log_probs, const std::vector<std::size_t>& prefix,
                        std::size_t blank) {
  if (log_probs.rank() != 2) {
    throw NumericError("ctc_prefix_score: expected (t,k) log-probs, got shape " +
                       shape_str(log_probs.shape()));
  }
  CtcPrefixScorer scorer(log_probs.values(), log_probs.rows(), log_probs.cols(), blank);
  CtcPrefixScorer::State state = scorer.start();
  for (std::size_t token : prefix) state = scorer.extend(state, token);
  return state.prefix_score;
}

namespace {

struct LiveHyp {
  std::vector<std::size_t> tokens;
  double att = 0.0;
  double lm = 0.0;
  double ctc = 0.0;
  SequenceScorer::Step att_step;
  SequenceScorer::Step lm_step;
  std::shared_ptr<const CtcPrefixScorer::State> ctc_state;
};

bool lex_less(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

std::vector<Hypothesis> beam_search(SequenceScorer& scorer, const BeamConfig& cfg,
                                    std::size_t eos, std::size_t max_len,
                                    const std::vector<std::size_t>& banned,
                                    SequenceScorer* lm, const CtcPrefixScorer* ctc) {
  if (cfg.width < 1) throw ConfigError("beam width must be >= 1");
  const std::size_t vocab = scorer.vocab_size();
  std::vector<bool> is_banned(vocab, false);
  for (std::size_t b : banned)
    if (b < vocab) is_banned[b] = true;
  is_banned[eos] = false;

  std::vector<LiveHyp> beams(1);
  beams[0].att_step = scorer.start();
  if (lm) beams[0].lm_step = lm->start();
  if (ctc) {
    beams[0].ctc_state = std::make_shared<CtcPrefixScorer::State>(ctc->start());
  }

  std::vector<Hypothesis> finished;
  auto combined_of = [&cfg](const Hypothesis& h) { return h.combined(cfg); };

  struct Cand {
    Hypothesis hyp;
    double score;
    std::size_t parent;
    std::size_t token;
  };

  for (std::size_t step = 0; step < max_len + 1 && !beams.empty(); ++step) {
    const bool last_step = step == max_len;  // only <eos> may close hypotheses now
    std::vector<Cand> cands;
    for (std::size_t bi = 0; bi < beams.size(); ++bi) {
      const LiveHyp& hyp = beams[bi];
      const auto& lp = hyp.att_step.log_probs;
      for (std::size_t tok = 0; tok < vocab; ++tok) {
        if (is_banned[tok]) continue;
        if (last_step && tok != eos) continue;
        if (lp[tok] == kLogZero) continue;  // impossible under the model
        Cand c;
        c.parent = bi;
        c.token = tok;
        c.hyp.tokens = hyp.tokens;
        c.hyp.att_score = hyp.att + lp[tok];
        c.hyp.lm_score = lm ? hyp.lm + hyp.lm_step.log_probs[tok] : 0.0;
        if (tok == eos) {
          c.hyp.complete = true;
          c.hyp.ctc_score = ctc ? ctc->complete_score(*hyp.ctc_state) : 0.0;
        } else {
          c.hyp.tokens.push_back(tok);
          c.hyp.ctc_score = hyp.ctc;  // refined below for kept candidates
        }
        c.score = combined_of(c.hyp);
        cands.push_back(std::move(c));
      }
    }
    if (cands.empty()) break;

    // With ctc fusion the prefix score of every candidate matters for the
    // ranking, so compute it before pruning.
    if (ctc) {
      for (Cand& c : cands) {
        if (c.hyp.complete) continue;
        c.hyp.ctc_score = ctc->extend(*beams[c.parent].ctc_state, c.token).prefix_score;
        c.score = combined_of(c.hyp);
      }
    }

    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      return lex_less(a.hyp.tokens, b.hyp.tokens);
    });

    // complete and incomplete candidates compete for the same `width` slots;
    // completed ones among the survivors retire to the finished set (this is
    // what makes width 1 coincide with greedy decoding)
    if (cands.size() > cfg.width) cands.resize(cfg.width);
    std::vector<LiveHyp> next;
    for (const Cand& c : cands) {
      if (c.hyp.complete) {
        finished.push_back(c.hyp);
        continue;
      }
      LiveHyp nh;
      nh.tokens = c.hyp.tokens;
      nh.att = c.hyp.att_score;
      nh.lm = c.hyp.lm_score;
      nh.ctc = c.hyp.ctc_score;
      nh.att_step = scorer.advance(beams[c.parent].att_step, c.token);
      if (lm) nh.lm_step = lm->advance(beams[c.parent].lm_step, c.token);
      if (ctc) {
        nh.ctc_state = std::make_shared<CtcPrefixScorer::State>(
            ctc->extend(*beams[c.parent].ctc_state, c.token));
      }
      next.push_back(std::move(nh));
    }
    beams = std::move(next);
  }

  std::stable_sort(finished.begin(), finished.end(),
                   [&combined_of](const Hypothesis& a, const Hypothesis& b) {
                     const double sa = combined_of(a), sb = combined_of(b);
                     if (sa != sb) return sa > sb;
                     return lex_less(a.tokens, b.tokens);
                   });
  if (finished.empty()) {
    // nothing reached <eos>; report the best incomplete hypothesis
    if (beams.empty()) throw NumericError("beam search produced no hypotheses");
    Hypothesis h;
    h.tokens = beams[0].tokens;
    h.att_score = beams[0].att;
    h.lm_score = beams[0].lm;
    h.ctc_score = beams[0].ctc;
    h.truncated = true;
    return {h};
  }
  if (finished.size() > cfg.nbest) finished.resize(cfg.nbest);
  return finished;
}

std::vector<std::size_t> greedy_decode(SequenceScorer& scorer, std::size_t eos,
                                       std::size_t max_len,
                                       const std::vector<std::size_t>& banned) {
  const std::size_t vocab = scorer.vocab_size();
  std::vector<bool> is_banned(vocab, false);
  for (std::size_t b : banned)
    if (b < vocab) is_banned[b] = true;
  is_banned[eos] = false;

  std::vector<std::size_t> tokens;
  SequenceScorer::Step step = scorer.start();
  for (std::size_t i = 0; i < max_len; ++i) {
    std::size_t best = vocab;
    for (std::size_t tok = 0; tok < vocab; ++tok) {
      if (is_banned[tok]) continue;
      if (best == vocab || step.log_probs[tok] > step.log_probs[best]) best = tok;
    }
    if (best == eos || best == vocab) break;
    tokens.push_back(best);
    step = scorer.advance(step, best);
  }
  return tokens;
}

// ---- model adapters ----------------------------------------------------------

namespace {

// Attention decoder as an incremental scorer; the tape lives for the whole
// decode of one utterance.
class DecoderScorer : public SequenceScorer {
 public:
  DecoderScorer(std::shared_ptr<Tape> tape, Binding bind, const AttentionDecoderParams& dec,
                Tensor enc, std::size_t start_token)
      : tape_(std::move(tape)), bind_(std::move(bind)), dec_(dec), enc_(std::move(enc)),
        start_token_(start_token) {}

  Step start() override {
    auto state = std::make_shared<Holder>();
    state->dec = dec_.start(enc_.rows());
    return make_step(*state, start_token_);
  }

  Step advance(const Step& prev, std::size_t token) override {
    const auto* holder = static_cast<const Holder*>(prev.state.get());
    return make_step(*holder, token);
  }

  std::size_t vocab_size() const override { return dec_.vocab; }

 private:
  struct Holder {
    AttentionDecoderParams::State dec;
  };

  Step make_step(const Holder& from, std::size_t token) {
    LossOptions opts;  // eval mode
    auto [logits, next] = dec_.step(bind_, enc_, from.dec, token, opts);
    Tensor lp = log_softmax(logits);
    auto holder = std::make_shared<Holder>();
    holder->dec = std::move(next);
    Step out;
    out.state = std::move(holder);
    out.log_probs = lp.values();
    return out;
  }

  std::shared_ptr<Tape> tape_;
  Binding bind_;
  const AttentionDecoderParams& dec_;
  Tensor enc_;
  std::size_t start_token_;
};

class LmScorer : public SequenceScorer {
 public:
  LmScorer(std::shared_ptr<Tape> tape, Binding bind, RnnLm& lm)
      : tape_(std::move(tape)), bind_(std::move(bind)), lm_(lm) {}

  Step start() override {
    auto [lp, state] = lm_.step(bind_, lm_.start(), Vocabulary::kSos);
    return wrap(lp, std::move(state));
  }

  Step advance(const Step& prev, std::size_t token) override {
    const auto* holder = static_cast<const Holder*>(prev.state.get());
    auto [lp, state] = lm_.step(bind_, holder->state, token);
    return wrap(lp, std::move(state));
  }

  std::size_t vocab_size() const override { return lm_.vocab().size(); }

 private:
  struct Holder {
    RnnLm::State state;
  };

  Step wrap(const Tensor& lp, RnnLm::State state) {
    auto holder = std::make_shared<Holder>();
    holder->state = std::move(state);
    Step out;
    out.state = std::move(holder);
    out.log_probs = lp.values();
    return out;
  }

  std::shared_ptr<Tape> tape_;
  Binding bind_;
  RnnLm& lm_;
};

struct DecodeSetup {
  std::unique_ptr<DecoderScorer> scorer;
  std::unique_ptr<LmScorer> lm;
  std::unique_ptr<CtcPrefixScorer> ctc;
  std::vector<std::size_t> banned;
  std::size_t max_len = 0;
};

DecodeSetup prepare_decode(Model& model, const Utterance& utt, double max_len_ratio,
                           RnnLm* lm, bool with_ctc,
                           const std::string& force_target_lang) {
  DecodeSetup setup;
  auto tape = std::make_shared<Tape>();
  Binding bind(*tape);
  LossOptions opts;  // eval mode
  const Vocabulary& vocab = model.vocab();
  const std::string& kind = model.dims().kind;

  Tensor enc;
  std::size_t start_token = Vocabulary::kSos;
  if (kind == "st") {
    auto& st = dynamic_cast<StModel&>(model);
    enc = st.encode(bind, utt, opts);
    const std::string lang = force_target_lang.empty() ? utt.tgt_lang : force_target_lang;
    start_token = vocab.lang_to(lang);
  } else if (kind == "nmt") {
    auto& nmt = dynamic_cast<NmtModel&>(model);
    enc = nmt.encode(bind, utt, opts);
    const std::string lang = force_target_lang.empty() ? utt.tgt_lang : force_target_lang;
    start_token = vocab.lang_to(lang);
  } else if (kind == "asr") {
    auto& asr = dynamic_cast<AsrModel&>(model);
    enc = asr.encode(bind, utt, opts);
    if (with_ctc) {
      Tensor lp = asr.ctc_log_probs(bind, enc);
      setup.ctc = std::make_unique<CtcPrefixScorer>(lp.values(), lp.rows(), lp.cols(),
                                                    Vocabulary::kBlank);
    }
  } else {
    throw ConfigError("model kind '" + kind + "' cannot be decoded from an utterance");
  }

  // structural tokens never come out of the decoder; multilingual asr may
  // emit its language-id token
  setup.banned = {Vocabulary::kPad, Vocabulary::kSos, Vocabulary::kUnk, Vocabulary::kBlank};
  for (std::size_t t : vocab.language_tokens()) {
    const std::string& tok = vocab.tokens()[t];
    const bool lid = tok.rfind("<LID:", 0) == 0;
    if (kind == "asr" && model.dims().multilingual && lid) continue;
    setup.banned.push_back(t);
  }

  setup.max_len = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::ceil(max_len_ratio * static_cast<double>(enc.rows()))));

  const AttentionDecoderParams& dec = kind == "st"
                                          ? dynamic_cast<StModel&>(model).decoder()
                                          : kind == "nmt"
                                                ? dynamic_cast<NmtModel&>(model).decoder()
                                                : dynamic_cast<AsrModel&>(model).decoder();
  setup.scorer = std::make_unique<DecoderScorer>(tape, bind, dec, enc, start_token);
  if (lm) {
    auto lm_tape = std::make_shared<Tape>();
    Binding lm_bind(*lm_tape);
    setup.lm = std::make_unique<LmScorer>(lm_tape, lm_bind, *lm);
  }
  return setup;
}

}  // namespace

std::vector<Hypothesis> decode_utterance(Model& model, const Utterance& utt,
                                         const BeamConfig& cfg, RnnLm* lm,
                                         const std::string& force_target_lang) {
  const bool with_ctc = model.dims().kind == "asr" && cfg.ctc_weight != 0.0;
  RnnLm* use_lm = model.dims().kind == "asr" && cfg.lm_weight != 0.0 ? lm : nullptr;
  DecodeSetup setup =
      prepare_decode(model, utt, cfg.max_len_ratio, use_lm, with_ctc, force_target_lang);
  return beam_search(*setup.scorer, cfg, Vocabulary::kEos, setup.max_len, setup.banned,
                     setup.lm.get(), setup.ctc.get());
}

std::vector<std::size_t> greedy_decode_utterance(Model& model, const Utterance& utt,
                                                 double max_len_ratio,
                                                 const std::string& force_target_lang) {
  DecodeSetup setup =
      prepare_decode(model, utt, max_len_ratio, nullptr, false, force_target_lang);
  return greedy_decode(*setup.scorer, Vocabulary::kEos, setup.max_len, setup.banned);
}

// ---- n-best records -----------------------------------------------------------

void write_nbest(const std::string& path, const std::vector<NbestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write n-best file '" + path + "'");
  out << std::setprecision(17);
  for (const auto& r : records) {
    out << r.id << '\t' << r.rank << '\t' << r.text << '\t' << r.combined << '\t'
        << r.att << '\t' << r.ctc << '\t' << r.lm << '\t' << r.penalty << '\n';
  }
}

std::vector<NbestRecord> read_nbest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open n-best file '" + path + "'");
  std::vector<NbestRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find('\t', start);
      if (pos == std::string::npos) {
        f.push_back(line.substr(start));
        break;
      }
      f.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (f.size() != 8) {
      throw DataError("n-best line with " + std::to_string(f.size()) + " fields in '" +
                      path + "'");
    }
    NbestRecord r;
    r.id = f[0];
    r.rank = std::stoul(f[1]);
    r.text = f[2];
    r.combined = std::stod(f[3]);
    r.att = std::stod(f[4]);
    r.ctc = std::stod(f[5]);
    r.lm = std::stod(f[6]);
    r.penalty = std::stod(f[7]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mst
