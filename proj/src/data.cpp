// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mst {

std::vector<std::string> utf8_chars(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if ((c & 0x80) == 0x00) len = 1;
    else if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > text.size()) len = 1;  // truncated sequence, keep the byte
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

namespace {

// Common typographic punctuation mapped down to ASCII before any stripping.
const std::map<std::string, std::string>& punct_normal_map() {
  static const std::map<std::string, std::string> m = {
      {"‘", "'"}, {"’", "'"}, {"ʼ", "'"}, {"“", "\""},
      {"”", "\""}, {"„", "\""}, {"«", "\""}, {"»", "\""},
      {"–", "-"}, {"—", "-"}, {"‐", "-"}, {"‑", "-"},
      {"…", "..."}, {" ", " "}, {"　", " "},
  };
  return m;
}

bool is_ascii_punct(char c) {
  return std::strchr("!\"#$%&()*+,-./:;<=>?@[\\]^_`{|}~", c) != nullptr;
}

bool is_unicode_punct(const std::string& cp) {
  if (cp.size() == 1) return is_ascii_punct(cp[0]);
  return cp == "¡" || cp == "¿";  // inverted marks survive normalization
}

std::string lowercase_cp(const std::string& cp) {
  if (cp.size() == 1) {
    char c = cp[0];
    if (c >= 'A' && c <= 'Z') return std::string(1, static_cast<char>(c + 32));
    return cp;
  }
  if (cp.size() == 2) {
    const unsigned char b0 = static_cast<unsigned char>(cp[0]);
    const unsigned char b1 = static_cast<unsigned char>(cp[1]);
    // Latin-1 supplement uppercase block, multiplication sign excluded
    if (b0 == 0xC3 && b1 >= 0x80 && b1 <= 0x9E && b1 != 0x97) {
      std::string low = cp;
      low[1] = static_cast<char>(b1 + 0x20);
      return low;
    }
  }
  return cp;
}

bool is_space_cp(const std::string& cp) {
  return cp == " " || cp == "\t" || cp == "\n" || cp == "\r";
}

}  // namespace

std::string normalize_text(const std::string& raw, TextSide side) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  bool any = false;
  for (const std::string& cp_raw : utf8_chars(raw)) {
    std::string cp = cp_raw;
    auto it = punct_normal_map().find(cp);
    if (it != punct_normal_map().end()) cp = it->second;
    // a mapping may expand to several ASCII chars ("...")
    for (const std::string& unit : utf8_chars(cp)) {
      std::string low = lowercase_cp(unit);
      if (is_space_cp(low)) {
        pending_space = true;
        continue;
      }
      if (side == TextSide::Source && low != "'" && is_unicode_punct(low)) continue;
      if (pending_space && any) out += ' ';
      pending_space = false;
      any = true;
      out += low;
    }
  }
  return out;
}

const std::vector<Utterance>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw DataError("unknown split '" + name + "' (expected train, dev or test)");
}

std::vector<Utterance>& Corpus::split(const std::string& name) {
  return const_cast<std::vector<Utterance>&>(
      static_cast<const Corpus*>(this)->split(name));
}

std::vector<std::string> Corpus::source_languages() const {
  std::set<std::string> s;
  for (const auto& p : pairs) s.insert(p.src_lang);
  return {s.begin(), s.end()};
}

std::vector<std::string> Corpus::target_languages() const {
  std::set<std::string> s;
  for (const auto& p : pairs) s.insert(p.tgt_lang);
  return {s.begin(), s.end()};
}

Vocabulary Vocabulary::build(const Corpus& corpus) {
  if (corpus.train.empty() && corpus.dev.empty() && corpus.test.empty()) {
    throw DataError("cannot build a vocabulary from an empty corpus");
  }
  std::set<std::string> chars;
  auto collect = [&chars](const std::vector<Utterance>& utts) {
    for (const auto& u : utts) {
      for (const auto& c : utf8_chars(u.transcript)) chars.insert(c);
      for (const auto& tr : u.translations)
        for (const auto& c : utf8_chars(tr)) chars.insert(c);
    }
  };
  collect(corpus.train);
  collect(corpus.dev);
  collect(corpus.test);

  std::vector<std::string> tokens = {"<pad>", "<sos>", "<eos>", "<unk>", "<blank>"};
  for (const auto& lang : corpus.target_languages()) tokens.push_back("<2" + lang + ">");
  for (const auto& lang : corpus.source_languages()) tokens.push_back("<LID:" + lang + ">");
  tokens.insert(tokens.end(), chars.begin(), chars.end());
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], i).second) {
      throw DataError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

const std::string& Vocabulary::token(std::size_t idx) const {
  if (idx >= tokens_.size()) {
    throw DataError("vocabulary index " + std::to_string(idx) + " out of range");
  }
  return tokens_[idx];
}

int Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : static_cast<int>(it->second);
}

std::size_t Vocabulary::lang_to(const std::string& lang) const {
  int idx = find("<2" + lang + ">");
  if (idx < 0) throw DataError("vocabulary has no target-language token <2" + lang + ">");
  return static_cast<std::size_t>(idx);
}

std::size_t Vocabulary::lang_id(const std::string& lang) const {
  int idx = find("<LID:" + lang + ">");
  if (idx < 0) throw DataError("vocabulary has no language-id token <LID:" + lang + ">");
  return static_cast<std::size_t>(idx);
}

bool Vocabulary::has_lang_to(const std::string& lang) const {
  return find("<2" + lang + ">") >= 0;
}

std::vector<std::size_t> Vocabulary::language_tokens() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].rfind("<2", 0) == 0 || tokens_[i].rfind("<LID:", 0) == 0)
      out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Vocabulary::encode_chars(const std::string& text) const {
  std::vector<std::size_t> ids;
  for (const auto& c : utf8_chars(text)) {
    auto it = index_.find(c);
    if (it == index_.end()) {
      throw DataError("character '" + c + "' is not in the vocabulary");
    }
    ids.push_back(it->second);
  }
  return ids;
}

std::string Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::string out;
  for (std::size_t id : ids) {
    const std::string& tok = token(id);
    if (tok.size() >= 2 && tok.front() == '<' && tok.back() == '>') continue;
    out += tok;
  }
  return out;
}

DecoderIo make_decoder_io(const Utterance& utt, Task task, const Vocabulary& vocab,
                          bool multilingual_asr, std::size_t translation_index) {
  DecoderIo io;
  if (task == Task::Asr) {
    std::vector<std::size_t> ref = vocab.encode_chars(utt.transcript);
    io.input.push_back(Vocabulary::kSos);
    if (multilingual_asr) {
      const std::size_t lid = vocab.lang_id(utt.src_lang);
      io.input.push_back(lid);
      io.target.push_back(lid);
    }
    io.input.insert(io.input.end(), ref.begin(), ref.end());
    io.target.insert(io.target.end(), ref.begin(), ref.end());
  } else {
    if (translation_index >= utt.translations.size()) {
      throw DataError("utterance '" + utt.id + "' has no translation #" +
                      std::to_string(translation_index));
    }
    std::vector<std::size_t> ref = vocab.encode_chars(utt.translations[translation_index]);
    io.input.push_back(vocab.lang_to(utt.tgt_lang));
    io.input.insert(io.input.end(), ref.begin(), ref.end());
    io.target = ref;
  }
  io.target.push_back(Vocabulary::kEos);
  return io;
}

Corpus length_filter(const Corpus& corpus, std::size_t max_frames, std::size_t max_chars,
                     FilterStats* stats) {
  if (max_frames == 0 || max_chars == 0) {
    throw ConfigError("length_filter: limits must be positive");
  }
  FilterStats local;
  Corpus out;
  out.pairs = corpus.pairs;
  auto run = [&](const std::vector<Utterance>& in, std::vector<Utterance>& kept) {
    for (const auto& u : in) {
      if (u.frames > max_frames) {
        ++local.removed_frames;
        continue;
      }
      std::size_t chars = utf8_chars(u.transcript).size();
      for (const auto& tr : u.translations)
        chars = std::max(chars, utf8_chars(tr).size());
      if (chars > max_chars) {
        ++local.removed_chars;
        continue;
      }
      ++local.kept;
      kept.push_back(u);
    }
  };
  run(corpus.train, out.train);
  run(corpus.dev, out.dev);
  run(corpus.test, out.test);
  if (stats) *stats = local;
  return out;
}

std::vector<Utterance> speed_perturb(const Utterance& utt,
                                     const std::vector<double>& factors) {
  std::vector<Utterance> out;
  for (double f : factors) {
    if (f <= 0.0) throw ConfigError("speed_perturb: factors must be positive");
    if (f == 1.0) {
      out.push_back(utt);
      continue;
    }
    const std::size_t t = utt.frames, d = utt.feature_dim;
    const std::size_t nt = static_cast<std::size_t>(
        std::llround(static_cast<double>(t) / f));
    if (nt == 0) {
      throw DataError("speed_perturb: factor " + std::to_string(f) +
                      " leaves utterance '" + utt.id + "' with no frames");
    }
    Utterance v = utt;
    v.id = utt.id + "#" + std::to_string(f).substr(0, 4);
    v.frames = nt;
    v.features.assign(nt * d, 0.0);
    for (std::size_t i = 0; i < nt; ++i) {
      const double pos = nt == 1 ? 0.0
                                 : static_cast<double>(i) * static_cast<double>(t - 1) /
                                       static_cast<double>(nt - 1);
      const std::size_t lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, t - 1);
      const double w = pos - static_cast<double>(lo);
      for (std::size_t j = 0; j < d; ++j) {
        v.features[i * d + j] =
            (1.0 - w) * utt.features[lo * d + j] + w * utt.features[hi * d + j];
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (pairs.empty()) throw ConfigError("synthetic spec: no language pairs");
  if (feature_dim == 0) throw ConfigError("synthetic spec: feature_dim must be positive");
  if (frames_per_char[0] < 1 || frames_per_char[0] > frames_per_char[1]) {
    throw ConfigError("synthetic spec: invalid frames_per_char range");
  }
  if (utterance_chars[0] < 1 || utterance_chars[0] > utterance_chars[1]) {
    throw ConfigError("synthetic spec: invalid utterance_chars range");
  }
  std::set<std::string> langs;
  for (const auto& [src, tgt] : pairs) {
    langs.insert(src);
    langs.insert(tgt);
  }
  for (const auto& lang : langs) {
    auto it = alphabets.find(lang);
    if (it == alphabets.end() || it->second.empty()) {
      throw ConfigError("synthetic spec: no alphabet for language '" + lang + "'");
    }
  }
  // alphabets must be pairwise disjoint so a decoded character identifies
  // its language
  std::map<std::string, std::string> owner;
  for (const auto& lang : langs) {
    for (const auto& c : utf8_chars(alphabets.at(lang))) {
      auto [it, fresh] = owner.emplace(c, lang);
      if (!fresh && it->second != lang) {
        throw ConfigError("synthetic spec: alphabets of '" + it->second + "' and '" +
                          lang + "' both contain '" + c + "'");
      }
    }
  }
  for (const auto& [src, tgt] : pairs) {
    if (utf8_chars(alphabets.at(src)).size() != utf8_chars(alphabets.at(tgt)).size()) {
      throw ConfigError("synthetic spec: alphabets of pair " + src + "-" + tgt +
                        " differ in size; the cipher must be a bijection");
    }
  }
}

namespace {

std::string reorder_window(const std::vector<std::string>& chars, std::size_t window) {
  std::string out;
  if (window < 2) {
    for (const auto& c : chars) out += c;
    return out;
  }
  for (std::size_t base = 0; base < chars.size(); base += window) {
    const std::size_t end = std::min(base + window, chars.size());
    if (end - base == window) {
      for (std::size_t i = end; i-- > base;) out += chars[i];
    } else {
      for (std::size_t i = base; i < end; ++i) out += chars[i];
    }
  }
  return out;
}

}  // namespace

std::string cipher_translate(const SyntheticSpec& spec, const std::string& src_text,
                             const std::string& src_lang, const std::string& tgt_lang) {
  const auto src_alpha = utf8_chars(spec.alphabets.at(src_lang));
  const auto tgt_alpha = utf8_chars(spec.alphabets.at(tgt_lang));
  std::map<std::string, std::string> table;
  for (std::size_t i = 0; i < src_alpha.size(); ++i) table[src_alpha[i]] = tgt_alpha[i];
  std::string reordered = reorder_window(utf8_chars(src_text), spec.reorder_window);
  std::string out;
  for (const auto& c : utf8_chars(reordered)) {
    auto it = table.find(c);
    if (it == table.end()) {
      throw DataError("cipher: character '" + c + "' is not in the " + src_lang +
                      " alphabet");
    }
    out += it->second;
  }
  return out;
}

std::string cipher_invert(const SyntheticSpec& spec, const std::string& tgt_text,
                          const std::string& src_lang, const std::string& tgt_lang) {
  const auto src_alpha = utf8_chars(spec.alphabets.at(src_lang));
  const auto tgt_alpha = utf8_chars(spec.alphabets.at(tgt_lang));
  std::map<std::string, std::string> table;
  for (std::size_t i = 0; i < src_alpha.size(); ++i) table[tgt_alpha[i]] = src_alpha[i];
  std::string unciphered;
  for (const auto& c : utf8_chars(tgt_text)) {
    auto it = table.find(c);
    if (it == table.end()) {
      throw DataError("cipher: character '" + c + "' is not in the " + tgt_lang +
                      " alphabet");
    }
    unciphered += it->second;
  }
  // the window swap is an involution
  return reorder_window(utf8_chars(unciphered), spec.reorder_window);
}

Corpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  Corpus corpus;
  Rng root(spec.seed);

  // one prototype per character, shared across pairs
  std::map<std::string, std::vector<double>> prototypes;
  for (const auto& [lang, alpha] : spec.alphabets) {
    for (const auto& c : utf8_chars(alpha)) {
      if (prototypes.count(c)) continue;
      Rng proto_rng = root.fork(Rng::hash_str("proto:" + c));
      std::vector<double> proto(spec.feature_dim);
      for (double& v : proto) v = proto_rng.normal();
      prototypes.emplace(c, std::move(proto));
    }
  }

  const std::array<std::pair<const char*, std::size_t>, 3> split_specs = {{
      {"train", spec.train_count}, {"dev", spec.dev_count}, {"test", spec.test_count}}};

  for (const auto& [src, tgt] : spec.pairs) {
    PairInfo info{src, tgt, 0.0};
    const auto alpha = utf8_chars(spec.alphabets.at(src));
    for (const auto& [split_name, count] : split_specs) {
      auto& bucket = corpus.split(split_name);
      for (std::size_t n = 0; n < count; ++n) {
        Utterance u;
        u.id = src + "-" + tgt + "_" + split_name + "_" + std::to_string(n);
        u.src_lang = src;
        u.tgt_lang = tgt;
        Rng rng = root.fork(Rng::hash_str("utt:" + u.id));
        const std::size_t chars =
            spec.utterance_chars[0] +
            rng.integer(spec.utterance_chars[1] - spec.utterance_chars[0] + 1);
        std::string text;
        for (std::size_t i = 0; i < chars; ++i)
          text += alpha[rng.integer(alpha.size())];
        u.transcript = text;
        u.translations.push_back(cipher_translate(spec, text, src, tgt));
        for (const auto& c : utf8_chars(text)) {
          const std::size_t reps =
              spec.frames_per_char[0] +
              rng.integer(spec.frames_per_char[1] - spec.frames_per_char[0] + 1);
          const auto& proto = prototypes.at(c);
          for (std::size_t r = 0; r < reps; ++r) {
            for (std::size_t j = 0; j < spec.feature_dim; ++j) {
              u.features.push_back(proto[j] + spec.noise_sigma * rng.normal());
            }
          }
        }
        u.feature_dim = spec.feature_dim;
        u.frames = u.features.size() / spec.feature_dim;
        info.hours += static_cast<double>(u.frames) * 0.01 / 3600.0;
        bucket.push_back(std::move(u));
      }
    }
    corpus.pairs.push_back(info);
  }
  return corpus;
}

BatchPlan bucket_batches(const std::vector<Utterance>& split, std::size_t batch_size,
                         std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("bucket_batches: batch size must be >= 1");
  std::vector<std::size_t> order(split.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&split](std::size_t a, std::size_t b) {
    if (split[a].frames != split[b].frames) return split[a].frames < split[b].frames;
    return split[a].id < split[b].id;
  });
  BatchPlan plan;
  for (std::size_t base = 0; base < order.size(); base += batch_size) {
    const std::size_t end = std::min(base + batch_size, order.size());
    plan.batches.emplace_back(order.begin() + base, order.begin() + end);
  }
  Rng rng(seed);
  rng.shuffle(plan.batches);
  return plan;
}

// ---- corpus I/O -------------------------------------------------------------

namespace {

constexpr char kFeatureMagic[8] = {'M', 'S', 'T', 'F', 'E', 'A', 'T', '1'};

void require_little_endian() {
  const std::uint32_t probe = 1;
  if (*reinterpret_cast<const unsigned char*>(&probe) != 1) {
    throw DataError("feature and checkpoint files require a little-endian host");
  }
}

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("unexpected end of binary file");
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_feature_file(const std::string& path, std::size_t frames, std::size_t dim,
                        const std::vector<double>& data) {
  require_little_endian();
  if (data.size() != frames * dim) {
    throw DataError("feature file '" + path + "': " + std::to_string(data.size()) +
                    " values for " + std::to_string(frames) + "x" + std::to_string(dim));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file '" + path + "'");
  out.write(kFeatureMagic, sizeof(kFeatureMagic));
  write_raw<std::uint32_t>(out, 1);
  write_raw<std::uint64_t>(out, frames);
  write_raw<std::uint64_t>(out, dim);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out) throw DataError("failed writing feature file '" + path + "'");
}

void read_feature_file(const std::string& path, std::size_t& frames, std::size_t& dim,
                       std::vector<double>& data) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) {
    throw DataError("'" + path + "' is not a feature file");
  }
  std::uint32_t version;
  read_raw(in, version);
  if (version != 1) {
    throw DataError("feature file '" + path + "' has unsupported version " +
                    std::to_string(version));
  }
  std::uint64_t t, d;
  read_raw(in, t);
  read_raw(in, d);
  frames = t;
  dim = d;
  data.resize(frames * dim);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) throw DataError("feature file '" + path + "' is truncated");
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  json meta;
  meta["format"] = "mst-corpus-v1";
  meta["pairs"] = json::array();
  for (const auto& p : corpus.pairs) {
    meta["pairs"].push_back({{"src", p.src_lang}, {"tgt", p.tgt_lang}, {"hours", p.hours}});
  }
  const std::array<const char*, 3> splits = {"train", "dev", "test"};
  for (const char* split : splits) {
    for (const auto& p : corpus.pairs) {
      const fs::path split_dir = fs::path(dir) / p.name() / split;
      fs::create_directories(split_dir / "feats");
      std::ofstream manifest(split_dir / "manifest.tsv");
      if (!manifest) throw DataError("cannot write manifest under '" + dir + "'");
      for (const auto& u : corpus.split(split)) {
        if (u.src_lang != p.src_lang || u.tgt_lang != p.tgt_lang) continue;
        const std::string rel = "feats/" + u.id + ".bin";
        write_feature_file((split_dir / rel).string(), u.frames, u.feature_dim,
                           u.features);
        manifest << u.id << '\t' << u.src_lang << '\t' << u.tgt_lang << '\t' << rel
                 << '\t' << u.transcript;
        for (const auto& tr : u.translations) manifest << '\t' << tr;
        manifest << '\n';
      }
    }
  }
  std::ofstream meta_out(fs::path(dir) / "corpus.json");
  meta_out << meta.dump(2) << '\n';
}

Corpus load_corpus(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream meta_in(root / "corpus.json");
  if (!meta_in) throw DataError("no corpus.json under '" + dir + "'");
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw DataError("corpus.json under '" + dir + "' is invalid: " + e.what());
  }
  Corpus corpus;
  for (const auto& p : meta.at("pairs")) {
    corpus.pairs.push_back(
        {p.at("src").get<std::string>(), p.at("tgt").get<std::string>(),
         p.value("hours", 0.0)});
  }
  const std::array<const char*, 3> splits = {"train", "dev", "test"};
  for (const char* split : splits) {
    for (const auto& p : corpus.pairs) {
      const fs::path split_dir = root / p.name() / split;
      std::ifstream manifest(split_dir / "manifest.tsv");
      if (!manifest) continue;  // a pair may be absent from a split
      std::string line;
      while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() < 6) {
          throw DataError("manifest line with " + std::to_string(fields.size()) +
                          " fields under '" + split_dir.string() + "'");
        }
        Utterance u;
        u.id = fields[0];
        u.src_lang = fields[1];
        u.tgt_lang = fields[2];
        u.transcript = fields[4];
        for (std::size_t i = 5; i < fields.size(); ++i) u.translations.push_back(fields[i]);
        read_feature_file((split_dir / fields[3]).string(), u.frames, u.feature_dim,
                          u.features);
        corpus.split(split).push_back(std::move(u));
      }
    }
  }
  return corpus;
}

}  // namespace mst
