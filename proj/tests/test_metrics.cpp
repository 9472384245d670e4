// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/metrics.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "mst/common.hpp"

using namespace mst;

TEST_SUITE_BEGIN("metrics");

namespace {

// Independent report-style reimplementation straight from the definition:
// clipped modified n-gram precisions via string maps, geometric mean,
// closest-length brevity penalty. Kept free of the production code paths.
double reference_bleu(const std::vector<std::vector<std::string>>& hyps,
                      const std::vector<std::vector<std::vector<std::string>>>& refs) {
  long match[5] = {0, 0, 0, 0, 0}, total[5] = {0, 0, 0, 0, 0};
  long hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    hyp_len += static_cast<long>(hyps[s].size());
    long best = static_cast<long>(refs[s][0].size());
    for (const auto& r : refs[s]) {
      const long len = static_cast<long>(r.size());
      if (std::labs(len - static_cast<long>(hyps[s].size())) <
              std::labs(best - static_cast<long>(hyps[s].size())) ||
          (std::labs(len - static_cast<long>(hyps[s].size())) ==
               std::labs(best - static_cast<long>(hyps[s].size())) &&
           len < best)) {
        best = len;
      }
    }
    ref_len += best;
    for (int n = 1; n <= 4; ++n) {
      std::map<std::string, long> hyp_counts, clip;
      for (std::size_t i = 0; i + n <= hyps[s].size(); ++i) {
        std::string g;
        for (int j = 0; j < n; ++j) g += hyps[s][i + j] + "\x01";
        ++hyp_counts[g];
      }
      for (const auto& r : refs[s]) {
        std::map<std::string, long> counts;
        for (std::size_t i = 0; i + n <= r.size(); ++i) {
          std::string g;
          for (int j = 0; j < n; ++j) g += r[i + j] + "\x01";
          ++counts[g];
        }
        for (const auto& [g, c] : counts) clip[g] = std::max(clip[g], c);
      }
      for (const auto& [g, c] : hyp_counts) {
        total[n] += c;
        match[n] += std::min(c, clip.count(g) ? clip[g] : 0);
      }
    }
  }
  double log_sum = 0.0;
  int used = 0;
  for (int n = 1; n <= 4; ++n) {
    if (total[n] == 0) continue;
    ++used;
    if (match[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(match[n]) / static_cast<double>(total[n]));
  }
  if (used == 0) return 0.0;
  double bp = 1.0;
  if (hyp_len < ref_len) bp = hyp_len == 0 ? 0.0 : std::exp(1.0 - double(ref_len) / hyp_len);
  return 100.0 * bp * std::exp(log_sum / used);
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

TEST_CASE("identical hypotheses score one hundred exactly") {
  std::vector<std::string> hyps = {"the cat sat on the mat", "a b c d e"};
  std::vector<std::vector<std::string>> refs = {{hyps[0]}, {hyps[1]}};
  CHECK(corpus_bleu(hyps, refs) == 100.0);
}

TEST_CASE("clipped unigram precision matches the classic example") {
  BleuStats stats = sentence_bleu_stats(words("the the the the the the the"),
                                        {words("the cat is on the mat")});
  CHECK(stats.matches[0] == 2);
  CHECK(stats.totals[0] == 7);
}

TEST_CASE("all-empty hypotheses score zero") {
  std::vector<std::string> hyps = {"", ""};
  std::vector<std::vector<std::string>> refs = {{"a b"}, {"c d"}};
  CHECK(corpus_bleu(hyps, refs) == 0.0);
}

TEST_CASE("zero four-gram matches zero the whole score") {
  std::vector<std::string> hyps = {"a b c x"};
  std::vector<std::vector<std::string>> refs = {{"a b c d"}};
  CHECK(corpus_bleu(hyps, refs) == 0.0);
}

TEST_CASE("corpus reordering leaves the score unchanged") {
  std::vector<std::string> hyps = {"a b c d e", "f g h i", "a b d d"};
  std::vector<std::vector<std::string>> refs = {{"a b c d d"}, {"f g h i j"}, {"a b c d"}};
  const double forward = corpus_bleu(hyps, refs);
  std::reverse(hyps.begin(), hyps.end());
  std::reverse(refs.begin(), refs.end());
  CHECK(corpus_bleu(hyps, refs) == doctest::Approx(forward).epsilon(1e-12));
}

TEST_CASE("case differences vanish after the mandated lowercasing") {
  std::vector<std::string> hyps = {"The CAT sat ON the mat"};
  std::vector<std::vector<std::string>> refs = {{"the cat SAT on THE mat"}};
  CHECK(corpus_bleu(hyps, refs) == 100.0);
}

TEST_CASE("multi-reference clipping takes the best reference") {
  std::vector<std::string> hyps = {"a a b c"};
  std::vector<std::vector<std::string>> refs = {{"a b c d", "a a b d"}};
  BleuStats stats = sentence_bleu_stats(words(hyps[0]), {words(refs[0][0]), words(refs[0][1])});
  CHECK(stats.matches[0] == 4);  // both a's count thanks to the second reference
}

TEST_CASE("random corpora match the independent reimplementation") {
  Rng rng(606);
  for (int round = 0; round < 50; ++round) {
    const std::size_t sentences = 1 + rng.integer(4);
    std::vector<std::string> hyps;
    std::vector<std::vector<std::string>> ref_sets;
    std::vector<std::vector<std::string>> hyp_tokens;
    std::vector<std::vector<std::vector<std::string>>> ref_tokens;
    const std::vector<std::string> pool = {"a", "b", "c", "d", "e"};
    auto sentence = [&]() {
      const std::size_t len = 3 + rng.integer(6);
      std::string out;
      for (std::size_t i = 0; i < len; ++i) {
        if (i) out += ' ';
        out += pool[rng.integer(pool.size())];
      }
      return out;
    };
    for (std::size_t s = 0; s < sentences; ++s) {
      hyps.push_back(sentence());
      const std::size_t nrefs = 1 + rng.integer(3);
      std::vector<std::string> refs;
      for (std::size_t r = 0; r < nrefs; ++r) refs.push_back(sentence());
      ref_sets.push_back(refs);
      hyp_tokens.push_back(words(hyps.back()));
      std::vector<std::vector<std::string>> rt;
      for (const auto& r : refs) rt.push_back(words(r));
      ref_tokens.push_back(rt);
    }
    const double got = corpus_bleu(hyps, ref_sets);
    const double want = reference_bleu(hyp_tokens, ref_tokens);
    CHECK(std::abs(got - want) < 1e-9);
  }
}

TEST_CASE("identity scores one hundred on random corpora") {
  Rng rng(909);
  const std::vector<std::string> pool = {"a", "b", "c", "d"};
  for (int round = 0; round < 20; ++round) {
    std::vector<std::string> hyps;
    std::vector<std::vector<std::string>> refs;
    const std::size_t sentences = 1 + rng.integer(5);
    for (std::size_t s = 0; s < sentences; ++s) {
      std::string out;
      const std::size_t len = 1 + rng.integer(7);
      for (std::size_t i = 0; i < len; ++i) {
        if (i) out += ' ';
        out += pool[rng.integer(pool.size())];
      }
      hyps.push_back(out);
      refs.push_back({out});
    }
    CHECK(corpus_bleu(hyps, refs) == 100.0);
  }
}

TEST_CASE("word error rate on hand-checked cases") {
  CHECK(wer(words("a b c"), words("a b c")) == 0.0);
  CHECK(wer(words("a b c"), words("a x c")) == doctest::Approx(1.0 / 3.0));
  CHECK(wer(words("a b"), words("")) == 1.0);
  CHECK_THROWS_AS(wer(words(""), words("a")), DataError);
}

TEST_CASE("corpus wer pools edits over reference tokens") {
  std::vector<std::vector<std::string>> refs = {words("a b c"), words("d e")};
  std::vector<std::vector<std::string>> hyps = {words("a x c"), words("d e f")};
  // 1 substitution + 1 insertion over 5 reference tokens
  CHECK(corpus_wer(refs, hyps) == doctest::Approx(2.0 / 5.0));
}

TEST_CASE("edit distances satisfy the triangle inequality") {
  Rng rng(707);
  const std::vector<std::string> pool = {"a", "b", "c"};
  auto seq = [&]() {
    std::vector<std::string> out;
    const std::size_t len = 1 + rng.integer(6);
    for (std::size_t i = 0; i < len; ++i) out.push_back(pool[rng.integer(pool.size())]);
    return out;
  };
  for (int round = 0; round < 100; ++round) {
    const auto a = seq(), b = seq(), c = seq();
    CHECK(edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c));
  }
}

TEST_CASE("character error rate over raw strings") {
  CHECK(corpus_cer({"abc"}, {"abc"}) == 0.0);
  CHECK(corpus_cer({"abcd"}, {"abxd"}) == doctest::Approx(0.25));
}

TEST_CASE("evaluation tokens honour the punctuation stripping flag") {
  CHECK(eval_tokens("Hello, World!") == std::vector<std::string>{"hello,", "world!"});
  CHECK(eval_tokens("Hello, World!", true) == std::vector<std::string>{"hello", "world"});
}

TEST_SUITE_END();
