// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mst/common.hpp"
#include "mst/data.hpp"

namespace mst {

std::vector<std::string> eval_tokens(const std::string& text, bool strip_punct) {
  std::string normalized =
      normalize_text(text, strip_punct ? TextSide::Source : TextSide::Target);
  std::vector<std::string> tokens;
  std::istringstream in(normalized);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  return *this;
}

namespace {

std::map<std::string, std::int64_t> ngram_counts(const std::vector<std::string>& tokens,
                                                 std::size_t n) {
  std::map<std::string, std::int64_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

BleuStats sentence_bleu_stats(const std::vector<std::string>& hyp,
                              const std::vector<std::vector<std::string>>& refs) {
  if (refs.empty()) throw DataError("bleu: empty reference set");
  BleuStats stats;
  stats.hyp_len = static_cast<std::int64_t>(hyp.size());

  // effective reference length: closest to the hypothesis, ties to shorter
  std::int64_t best_ref = static_cast<std::int64_t>(refs[0].size());
  for (const auto& r : refs) {
    const std::int64_t len = static_cast<std::int64_t>(r.size());
    const std::int64_t d_new = std::llabs(len - stats.hyp_len);
    const std::int64_t d_old = std::llabs(best_ref - stats.hyp_len);
    if (d_new < d_old || (d_new == d_old && len < best_ref)) best_ref = len;
  }
  stats.ref_len = best_ref;

  for (std::size_t n = 1; n <= 4; ++n) {
    auto hyp_counts = ngram_counts(hyp, n);
    std::map<std::string, std::int64_t> clip;
    for (const auto& r : refs) {
      for (const auto& [gram, count] : ngram_counts(r, n)) {
        auto [it, fresh] = clip.emplace(gram, count);
        if (!fresh) it->second = std::max(it->second, count);
      }
    }
    for (const auto& [gram, count] : hyp_counts) {
      stats.totals[n - 1] += count;
      auto it = clip.find(gram);
      if (it != clip.end()) stats.matches[n - 1] += std::min(count, it->second);
    }
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats) {
  double log_sum = 0.0;
  std::size_t used = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (stats.totals[n] == 0) continue;  // corpus too short for this order
    ++used;
    if (stats.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(stats.matches[n]) /
                        static_cast<double>(stats.totals[n]));
  }
  if (used == 0) return 0.0;  // nothing was hypothesized
  const double precision = std::exp(log_sum / static_cast<double>(used));
  double brevity = 1.0;
  if (stats.hyp_len < stats.ref_len) {
    if (stats.hyp_len == 0) return 0.0;
    brevity = std::exp(1.0 - static_cast<double>(stats.ref_len) /
                                 static_cast<double>(stats.hyp_len));
  }
  return 100.0 * brevity * precision;
}

double corpus_bleu(const std::vector<std::string>& hyps,
                   const std::vector<std::vector<std::string>>& ref_sets,
                   bool strip_punct) {
  if (hyps.empty()) throw DataError("bleu: empty hypothesis corpus");
  if (hyps.size() != ref_sets.size()) {
    throw DataError("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                    std::to_string(ref_sets.size()) + " reference sets");
  }
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (ref_sets[i].empty()) {
      throw DataError("bleu: empty reference set at sentence " + std::to_string(i));
    }
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : ref_sets[i]) refs.push_back(eval_tokens(r, strip_punct));
    total += sentence_bleu_stats(eval_tokens(hyps[i], strip_punct), refs);
  }
  return bleu_from_stats(total);
}

std::int64_t edit_distance(const std::vector<std::string>& ref,
                           const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::int64_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<std::int64_t>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const std::int64_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw DataError("wer: empty reference");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

double corpus_wer(const std::vector<std::vector<std::string>>& refs,
                  const std::vector<std::vector<std::string>>& hyps) {
  if (refs.size() != hyps.size()) {
    throw DataError("wer: " + std::to_string(refs.size()) + " references vs " +
                    std::to_string(hyps.size()) + " hypotheses");
  }
  std::int64_t edits = 0, tokens = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].empty()) throw DataError("wer: empty reference at sentence " + std::to_string(i));
    edits += edit_distance(refs[i], hyps[i]);
    tokens += static_cast<std::int64_t>(refs[i].size());
  }
  return static_cast<double>(edits) / static_cast<double>(tokens);
}

double corpus_cer(const std::vector<std::string>& refs, const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size()) {
    throw DataError("cer: " + std::to_string(refs.size()) + " references vs " +
                    std::to_string(hyps.size()) + " hypotheses");
  }
  std::int64_t edits = 0, chars = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto r = utf8_chars(refs[i]);
    const auto h = utf8_chars(hyps[i]);
    if (r.empty()) throw DataError("cer: empty reference at sentence " + std::to_string(i));
    edits += edit_distance(r, h);
    chars += static_cast<std::int64_t>(r.size());
  }
  return static_cast<double>(edits) / static_cast<double>(chars);
}

void EvalReport::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report '" + path + "'");
  out << "# metric\t" << metric << "\tcorpus\t" << corpus_score << "\tcorpus_id\t"
      << corpus_id << "\tmodel\t" << model_fingerprint << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << '\t' << sentence_scores[i] << '\n';
  }
}

}  // namespace mst
