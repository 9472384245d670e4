// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mst {

// Whitespace tokens after lowercasing; optional punctuation stripping
// (apostrophe kept) for evaluation setups that mandate it.
std::vector<std::string> eval_tokens(const std::string& text, bool strip_punct = false);

struct BleuStats {
  std::array<std::int64_t, 4> matches{0, 0, 0, 0};
  std::array<std::int64_t, 4> totals{0, 0, 0, 0};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;  // effective: closest reference length, ties short

  BleuStats& operator+=(const BleuStats& other);
};

// Clipped modified n-gram counts (n=1..4) against the reference set;
// clipping uses the maximum count over references per n-gram.
BleuStats sentence_bleu_stats(const std::vector<std::string>& hyp,
                              const std::vector<std::vector<std::string>>& refs);

// Geometric mean of the four precisions times the brevity penalty, in
// [0, 100]. An n-gram order with zero matches but nonzero totals zeroes the
// score; orders with no totals (short corpora) are skipped.
double bleu_from_stats(const BleuStats& stats);

// Corpus-level score from summed sentence stats, never averaged sentence
// scores. Hypotheses and reference sets are lowercased and whitespace
// tokenized here.
double corpus_bleu(const std::vector<std::string>& hyps,
                   const std::vector<std::vector<std::string>>& ref_sets,
                   bool strip_punct = false);

// Unit-cost Levenshtein distance.
std::int64_t edit_distance(const std::vector<std::string>& ref,
                           const std::vector<std::string>& hyp);

// edits / reference length; the reference must be non-empty.
double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

// Corpus rate: total edits / total reference tokens.
double corpus_wer(const std::vector<std::vector<std::string>>& refs,
                  const std::vector<std::vector<std::string>>& hyps);

// Character-level corpus error rate over raw strings.
double corpus_cer(const std::vector<std::string>& refs, const std::vector<std::string>& hyps);

struct EvalReport {
  std::string metric;
  double corpus_score = 0.0;
  std::vector<std::string> ids;
  std::vector<double> sentence_scores;
  std::string corpus_id;
  std::string model_fingerprint;

  void save(const std::string& path) const;  // tsv: id <TAB> score
};

}  // namespace mst
