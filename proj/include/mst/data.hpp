// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mst/common.hpp"

namespace mst {

// Splits UTF-8 text into code points (each returned as a UTF-8 string).
std::vector<std::string> utf8_chars(const std::string& text);

enum class TextSide { Source, Target };

// Lowercases (ASCII + Latin-1), normalizes common unicode punctuation to
// ASCII, collapses whitespace; the source side additionally drops all
// punctuation except the apostrophe. Idempotent.
std::string normalize_text(const std::string& raw, TextSide side);

struct Utterance {
  std::string id;
  std::string src_lang;
  std::string tgt_lang;
  std::size_t frames = 0;
  std::size_t feature_dim = 0;
  std::vector<double> features;  // frames x feature_dim, row-major
  std::string transcript;
  std::vector<std::string> translations;  // at least one
};

struct PairInfo {
  std::string src_lang;
  std::string tgt_lang;
  double hours = 0.0;
  std::string name() const { return src_lang + "-" + tgt_lang; }
};

struct Corpus {
  std::vector<PairInfo> pairs;
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
  std::vector<Utterance> test;

  const std::vector<Utterance>& split(const std::string& name) const;
  std::vector<Utterance>& split(const std::string& name);
  std::vector<std::string> source_languages() const;  // sorted, unique
  std::vector<std::string> target_languages() const;
};

// Joint character inventory over all languages. Fixed index layout:
// <pad> <sos> <eos> <unk> <blank>, then <2xx> per target language, then
// <LID:xx> per source language, then characters sorted bytewise.
class Vocabulary {
 public:
  Vocabulary() = default;
  static Vocabulary build(const Corpus& corpus);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t idx) const;
  int find(const std::string& token) const;  // -1 when absent

  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kSos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kBlank = 4;

  std::size_t lang_to(const std::string& lang) const;   // <2xx>
  std::size_t lang_id(const std::string& lang) const;   // <LID:xx>
  bool has_lang_to(const std::string& lang) const;
  std::vector<std::size_t> language_tokens() const;     // all <2xx> and <LID:xx>

  // One id per code point; unknown characters raise DataError naming them.
  std::vector<std::size_t> encode_chars(const std::string& text) const;
  // Concatenates character tokens; special and language tokens are dropped.
  std::string decode(const std::vector<std::size_t>& ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

enum class Task { Asr, St, Nmt };

struct DecoderIo {
  std::vector<std::size_t> input;
  std::vector<std::size_t> target;
};

// Builds teacher-forcing sequences. ST/NMT: input starts with <2lang> in
// place of <sos>; multilingual ASR prepends <LID:src> to the reference.
DecoderIo make_decoder_io(const Utterance& utt, Task task, const Vocabulary& vocab,
                          bool multilingual_asr = false,
                          std::size_t translation_index = 0);

struct FilterStats {
  std::size_t kept = 0;
  std::size_t removed_frames = 0;
  std::size_t removed_chars = 0;
};

// Drops utterances with more than max_frames frames or whose transcript or
// any translation exceeds max_chars characters.
Corpus length_filter(const Corpus& corpus, std::size_t max_frames, std::size_t max_chars,
                     FilterStats* stats = nullptr);

// Linear time-axis resampling; new frame count is round(frames / factor).
// Ids get a "#<factor>" suffix except for factor 1.0, which is the identity.
std::vector<Utterance> speed_perturb(const Utterance& utt,
                                     const std::vector<double>& factors = {0.9, 1.0, 1.1});

struct SyntheticSpec {
  std::size_t feature_dim = 83;
  std::array<std::size_t, 2> frames_per_char{2, 4};
  double noise_sigma = 0.1;
  std::array<std::size_t, 2> utterance_chars{4, 10};
  std::size_t train_count = 200;  // per pair
  std::size_t dev_count = 30;
  std::size_t test_count = 30;
  std::uint64_t seed = 1;
  std::size_t reorder_window = 2;
  std::vector<std::pair<std::string, std::string>> pairs;  // (src, tgt) language codes
  std::map<std::string, std::string> alphabets;            // language -> characters

  void validate() const;  // disjoint alphabets, bijective pairs
};

// Deterministic toy corpus: per-character feature prototypes repeated for a
// few frames plus Gaussian noise; translations via a per-pair character
// cipher with local reordering, so each language's characters stay inside
// its own alphabet.
Corpus generate_synthetic_corpus(const SyntheticSpec& spec);

// The translation rule and its inverse (inverse undoes cipher then reorder).
std::string cipher_translate(const SyntheticSpec& spec, const std::string& src_text,
                             const std::string& src_lang, const std::string& tgt_lang);
std::string cipher_invert(const SyntheticSpec& spec, const std::string& tgt_text,
                          const std::string& src_lang, const std::string& tgt_lang);

struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;  // indices into the split
};

// Sorts by frame length (ties by id), slices into fixed-size batches, then
// shuffles batch order. Language pairs are never a grouping key.
BatchPlan bucket_batches(const std::vector<Utterance>& split, std::size_t batch_size,
                         std::uint64_t seed);

// ---- on-disk corpus layout --------------------------------------------------
// <dir>/corpus.json                                  pair list and counts
// <dir>/<src>-<tgt>/<split>/manifest.tsv             one utterance per line:
//     id  src  tgt  feature-path  transcript  translation[<TAB>translation...]
// <dir>/<src>-<tgt>/<split>/feats/<id>.bin           MSTFEAT1 header + doubles

void write_feature_file(const std::string& path, std::size_t frames, std::size_t dim,
                        const std::vector<double>& data);
void read_feature_file(const std::string& path, std::size_t& frames, std::size_t& dim,
                       std::vector<double>& data);

void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace mst
