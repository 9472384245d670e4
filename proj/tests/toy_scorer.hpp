// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "mst/decoding.hpp"

namespace mst::testing {

// Deterministic toy model: the next-token distribution is a pure function of
// the consumed prefix, drawn from a seeded generator.
class TableScorer : public SequenceScorer {
 public:
  TableScorer(std::size_t vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}

  Step start() override { return make_step(""); }

  Step advance(const Step& prev, std::size_t token) override {
    const auto* key = static_cast<const std::string*>(prev.state.get());
    return make_step(*key + "," + std::to_string(token));
  }

  std::size_t vocab_size() const override { return vocab_; }

  // oracle access: log-prob vector after consuming `prefix`
  std::vector<double> table(const std::vector<std::size_t>& prefix) const {
    std::string key;
    for (std::size_t t : prefix) key += "," + std::to_string(t);
    return row(key);
  }

 private:
  std::vector<double> row(const std::string& key) const {
    Rng rng(seed_ ^ Rng::hash_str(key));
    std::vector<double> probs(vocab_);
    double z = 0.0;
    for (double& p : probs) {
      p = std::exp(rng.uniform(-2.0, 2.0));
      z += p;
    }
    std::vector<double> lp(vocab_);
    for (std::size_t i = 0; i < vocab_; ++i) lp[i] = std::log(probs[i] / z);
    return lp;
  }

  Step make_step(const std::string& key) {
    Step s;
    s.state = std::make_shared<std::string>(key);
    s.log_probs = row(key);
    return s;
  }

  std::size_t vocab_;
  std::uint64_t seed_;
};

// Exhaustive search over all sequences of up to max_len tokens followed by
// <eos>, scored by walking the same scorer tables.
struct BruteBest {
  std::vector<std::size_t> tokens;
  double score = kLogZero;
};

inline void brute_force_best(const TableScorer& scorer, std::size_t eos,
                             std::size_t max_len, std::vector<std::size_t>& prefix,
                             double acc, BruteBest& best) {
  const std::vector<double> lp = scorer.table(prefix);
  const double finish = acc + lp[eos];
  if (finish > best.score ||
      (finish == best.score &&
       std::lexicographical_compare(prefix.begin(), prefix.end(), best.tokens.begin(),
                                    best.tokens.end()))) {
    best.tokens = prefix;
    best.score = finish;
  }
  if (prefix.size() == max_len) return;
  for (std::size_t tok = 0; tok < scorer.vocab_size(); ++tok) {
    if (tok == eos) continue;
    prefix.push_back(tok);
    brute_force_best(scorer, eos, max_len, prefix, acc + lp[tok], best);
    prefix.pop_back();
  }
}

}  // namespace mst::testing
