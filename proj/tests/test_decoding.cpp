// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/decoding.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "toy_scorer.hpp"
#include "mst/optim.hpp"

using namespace mst;
using mst::testing::TableScorer;
using mst::testing::BruteBest;

TEST_SUITE_BEGIN("decoding");

TEST_CASE("beam width one equals greedy decoding token for token") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    TableScorer scorer(5, 1000 + seed);
    BeamConfig cfg;
    cfg.width = 1;
    cfg.nbest = 1;
    std::vector<Hypothesis> beam = beam_search(scorer, cfg, 0, 6);
    std::vector<std::size_t> greedy = greedy_decode(scorer, 0, 6);
    REQUIRE(beam.size() == 1);
    CHECK(beam[0].tokens == greedy);
  }
}

TEST_CASE("a maximal beam returns the exhaustive-search optimum") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t vocab = 4, eos = 0, max_len = 5;
    TableScorer scorer(vocab, 2000 + seed);
    BeamConfig cfg;
    cfg.width = 1024;  // vocab^max_len
    cfg.nbest = 1;
    std::vector<Hypothesis> got = beam_search(scorer, cfg, eos, max_len);
    BruteBest best;
    std::vector<std::size_t> prefix;
    mst::testing::brute_force_best(scorer, eos, max_len, prefix, 0.0, best);
    REQUIRE(got.size() == 1);
    CHECK(got[0].tokens == best.tokens);
    CHECK(got[0].att_score == doctest::Approx(best.score).epsilon(1e-12));
  }
}

TEST_CASE("widening the beam never lowers the best score") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TableScorer scorer(5, 3000 + seed);
    BeamConfig cfg;
    cfg.nbest = 1;
    double prev = -1e300;
    for (std::size_t width : {1, 2, 4, 8}) {
      cfg.width = width;
      std::vector<Hypothesis> got = beam_search(scorer, cfg, 0, 6);
      REQUIRE(!got.empty());
      const double score = got[0].combined(cfg);
      CHECK(score >= prev - 1e-12);
      prev = score;
    }
  }
}

TEST_CASE("a length bonus never shortens the output") {
  // uniform next-token model: the bonus must favor longer hypotheses
  class UniformScorer : public SequenceScorer {
   public:
    Step start() override { return make(); }
    Step advance(const Step&, std::size_t) override { return make(); }
    std::size_t vocab_size() const override { return 4; }

   private:
    Step make() {
      Step s;
      s.state = std::make_shared<int>(0);
      s.log_probs.assign(4, std::log(0.25));
      return s;
    }
  };
  UniformScorer scorer;
  BeamConfig plain;
  plain.width = 4;
  plain.nbest = 1;
  BeamConfig bonused = plain;
  bonused.length_penalty = 0.6;
  std::vector<Hypothesis> a = beam_search(scorer, plain, 0, 5);
  std::vector<Hypothesis> b = beam_search(scorer, bonused, 0, 5);
  CHECK(b[0].tokens.size() >= a[0].tokens.size());
  // once the bonus exceeds log(vocab) every extra token pays for itself
  BeamConfig strong = plain;
  strong.length_penalty = 1.5;
  std::vector<Hypothesis> c = beam_search(scorer, strong, 0, 5);
  CHECK(c[0].tokens.size() == 5);
}

TEST_CASE("hypothesis scores are reconstructible from scratch") {
  TableScorer scorer(5, 77);
  BeamConfig cfg;
  cfg.width = 4;
  cfg.nbest = 4;
  cfg.length_penalty = 0.3;
  std::vector<Hypothesis> got = beam_search(scorer, cfg, 0, 6);
  REQUIRE(!got.empty());
  for (const Hypothesis& h : got) {
    double att = 0.0;
    std::vector<std::size_t> prefix;
    for (std::size_t tok : h.tokens) {
      att += scorer.table(prefix)[tok];
      prefix.push_back(tok);
    }
    att += scorer.table(prefix)[0];  // eos
    CHECK(std::abs(att - h.att_score) < 1e-10);
    const double combined = att + cfg.length_penalty * static_cast<double>(h.tokens.size());
    CHECK(std::abs(combined - h.combined(cfg)) < 1e-10);
  }
}

TEST_CASE("fixed seeds give identical n-best lists including ties") {
  TableScorer scorer(4, 321);
  BeamConfig cfg;
  cfg.width = 8;
  cfg.nbest = 8;
  std::vector<Hypothesis> a = beam_search(scorer, cfg, 0, 5);
  std::vector<Hypothesis> b = beam_search(scorer, cfg, 0, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].att_score == b[i].att_score);
  }
}

TEST_CASE("when nothing can finish, the best incomplete hypothesis is flagged") {
  // eos carries zero probability everywhere
  class NoEosScorer : public SequenceScorer {
   public:
    Step start() override { return make(); }
    Step advance(const Step&, std::size_t) override { return make(); }
    std::size_t vocab_size() const override { return 3; }

   private:
    Step make() {
      Step s;
      s.state = std::make_shared<int>(0);
      s.log_probs = {kLogZero, std::log(0.7), std::log(0.3)};
      return s;
    }
  };
  NoEosScorer scorer;
  BeamConfig cfg;
  cfg.width = 2;
  std::vector<Hypothesis> got = beam_search(scorer, cfg, 0, 4);
  REQUIRE(got.size() == 1);
  CHECK(got[0].truncated);
  CHECK(got[0].tokens.size() == 4);  // ran to the length limit
  CHECK_FALSE(got[0].complete);
}

TEST_CASE("greedy cut-off emits exactly the length limit when eos never wins") {
  TableScorer scorer(5, 555);
  // boost: find a seed where eos is never the argmax within 7 steps; 555 works
  std::vector<std::size_t> out = greedy_decode(scorer, 0, 7, {});
  CHECK(out.size() <= 7);
}

TEST_CASE("beam width below one is rejected") {
  TableScorer scorer(4, 1);
  BeamConfig cfg;
  cfg.width = 0;
  CHECK_THROWS_AS(beam_search(scorer, cfg, 0, 4), ConfigError);
}

TEST_CASE("a memorized model reproduces its training target") {
  SyntheticSpec spec;
  spec.feature_dim = 4;
  spec.frames_per_char = {6, 6};
  spec.noise_sigma = 0.0;
  spec.utterance_chars = {2, 3};
  spec.train_count = 2;
  spec.dev_count = 1;
  spec.test_count = 1;
  spec.seed = 3;
  spec.pairs = {{"aa", "xx"}};
  spec.alphabets = {{"aa", "abcd"}, {"xx", "efgh"}};
  Corpus corpus = generate_synthetic_corpus(spec);
  Vocabulary vocab = Vocabulary::build(corpus);
  ModelDims dims;
  dims.kind = "st";
  dims.feature_dim = 4;
  dims.vgg_channels1 = 2;
  dims.vgg_channels2 = 3;
  dims.enc_layers = 1;
  dims.enc_units = 16;
  dims.dec_layers = 2;
  dims.dec_units = 16;
  dims.embed_dim = 16;
  dims.attn_dim = 16;
  StModel model(dims, vocab, 9);

  const Utterance& utt = corpus.train[0];
  std::vector<const Utterance*> batch = {&utt};
  std::vector<Parameter*> params;
  for (auto& [name, p] : model.params().all()) params.push_back(p.get());
  Optimizer opt = Optimizer::adam({0.01, 0.9, 0.999, 1e-8});
  LossOptions opts;
  for (int step = 0; step < 150; ++step) {
    Tape tape;
    Binding bind(tape);
    Tensor loss = model.batch_loss(bind, batch, opts);
    tape.backward(loss);
    std::vector<std::vector<double>> grads;
    for (Parameter* p : params)
      grads.push_back(bind.bound(*p) ? tape.grad(bind.leaf_of(*p))
                                     : std::vector<double>(p->size(), 0.0));
    clip_global_norm(grads, 5.0);
    opt.step(params, grads);
  }
  const std::string greedy = vocab.decode(greedy_decode_utterance(model, utt));
  CHECK(greedy == utt.translations[0]);

  // beam width 1 through the model path agrees with the greedy tool
  BeamConfig cfg;
  cfg.width = 1;
  std::vector<Hypothesis> hyps = decode_utterance(model, utt, cfg);
  REQUIRE(!hyps.empty());
  CHECK(vocab.decode(hyps[0].tokens) == greedy);
}

TEST_CASE("asr joint decoding fuses reconstructible ctc and lm scores") {
  SyntheticSpec spec;
  spec.feature_dim = 4;
  spec.frames_per_char = {6, 6};
  spec.noise_sigma = 0.02;
  spec.utterance_chars = {2, 3};
  spec.train_count = 4;
  spec.dev_count = 1;
  spec.test_count = 1;
  spec.seed = 5;
  spec.pairs = {{"aa", "xx"}};
  spec.alphabets = {{"aa", "abcd"}, {"xx", "efgh"}};
  Corpus corpus = generate_synthetic_corpus(spec);
  Vocabulary vocab = Vocabulary::build(corpus);
  ModelDims dims;
  dims.kind = "asr";
  dims.feature_dim = 4;
  dims.vgg_channels1 = 2;
  dims.vgg_channels2 = 3;
  dims.enc_layers = 1;
  dims.enc_units = 12;
  dims.dec_layers = 2;
  dims.dec_units = 12;
  dims.embed_dim = 8;
  dims.attn_dim = 8;
  dims.loc_channels = 4;
  dims.loc_width = 5;
  AsrModel model(dims, vocab, 21);
  ModelDims lm_dims = dims;
  lm_dims.kind = "lm";
  RnnLm lm(lm_dims, vocab, 22);

  const Utterance& utt = corpus.train[0];
  BeamConfig cfg;
  cfg.width = 4;
  cfg.nbest = 2;
  cfg.ctc_weight = 0.3;
  cfg.lm_weight = 0.3;
  std::vector<Hypothesis> hyps = decode_utterance(model, utt, cfg, &lm);
  REQUIRE(!hyps.empty());
  const Hypothesis& best = hyps[0];
  CHECK(best.complete);

  // recompute the ctc component of the returned sequence from scratch
  Tape tape;
  Binding bind(tape);
  LossOptions opts;
  Tensor enc = model.encode(bind, utt, opts);
  Tensor ctc_lp = model.ctc_log_probs(bind, enc);
  CtcPrefixScorer scorer(ctc_lp.values(), ctc_lp.rows(), ctc_lp.cols(),
                         Vocabulary::kBlank);
  CtcPrefixScorer::State state = scorer.start();
  for (std::size_t tok : best.tokens) state = scorer.extend(state, tok);
  CHECK(std::abs(scorer.complete_score(state) - best.ctc_score) < 1e-10);

  // and the combined score is the documented linear combination
  const double combined = best.att_score + cfg.ctc_weight * best.ctc_score +
                          cfg.lm_weight * best.lm_score +
                          cfg.length_penalty * static_cast<double>(best.tokens.size());
  CHECK(std::abs(combined - best.combined(cfg)) < 1e-12);
}

TEST_CASE("n-best records round-trip through the tab-separated file") {
  namespace fs = std::filesystem;
  std::vector<NbestRecord> records;
  NbestRecord r;
  r.id = "utt1";
  r.rank = 0;
  r.text = "abc def";
  r.combined = -1.25;
  r.att = -2.0;
  r.ctc = 0.25;
  r.lm = 0.25;
  r.penalty = 0.25;
  records.push_back(r);
  r.id = "utt2";
  r.rank = 1;
  r.text = "";
  records.push_back(r);
  const std::string path = (fs::temp_directory_path() / "mst_nbest_test.tsv").string();
  write_nbest(path, records);
  std::vector<NbestRecord> back = read_nbest(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "utt1");
  CHECK(back[0].text == "abc def");
  CHECK(back[0].combined == -1.25);
  CHECK(back[1].rank == 1);
  CHECK(back[1].text.empty());
  fs::remove(path);
}

TEST_SUITE_END();
