// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mst::cli {

namespace {

void reject_unknown(const json& obj, const std::string& section,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
    }
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + " is not valid json: " + std::string(e.what()));
  }
}

SyntheticSpec parse_synthetic(const json& data) {
  reject_unknown(data, "data", {"corpus_dir", "max_frames", "max_chars", "feature_dim",
                                "frames_per_char", "noise_sigma", "utterance_chars",
                                "train_count", "dev_count", "test_count", "seed",
                                "reorder_window", "pairs", "alphabets"});
  SyntheticSpec spec;
  spec.feature_dim = get_or<std::size_t>(data, "feature_dim", spec.feature_dim);
  spec.noise_sigma = get_or<double>(data, "noise_sigma", spec.noise_sigma);
  spec.train_count = get_or<std::size_t>(data, "train_count", spec.train_count);
  spec.dev_count = get_or<std::size_t>(data, "dev_count", spec.dev_count);
  spec.test_count = get_or<std::size_t>(data, "test_count", spec.test_count);
  spec.seed = get_or<std::uint64_t>(data, "seed", spec.seed);
  spec.reorder_window = get_or<std::size_t>(data, "reorder_window", spec.reorder_window);
  if (data.contains("frames_per_char")) {
    auto v = data.at("frames_per_char").get<std::vector<std::size_t>>();
    if (v.size() != 2) throw ConfigError("frames_per_char must be [min, max]");
    spec.frames_per_char = {v[0], v[1]};
  }
  if (data.contains("utterance_chars")) {
    auto v = data.at("utterance_chars").get<std::vector<std::size_t>>();
    if (v.size() != 2) throw ConfigError("utterance_chars must be [min, max]");
    spec.utterance_chars = {v[0], v[1]};
  }
  if (data.contains("pairs")) {
    for (const auto& p : data.at("pairs")) {
      reject_unknown(p, "data.pairs[]", {"src", "tgt"});
      spec.pairs.emplace_back(p.at("src").get<std::string>(), p.at("tgt").get<std::string>());
    }
  }
  if (data.contains("alphabets")) {
    for (const auto& [lang, chars] : data.at("alphabets").items()) {
      spec.alphabets[lang] = chars.get<std::string>();
    }
  }
  return spec;
}

ModelDims parse_model(const json& m) {
  reject_unknown(m, "model",
                 {"kind", "feature_dim", "vgg_channels1", "vgg_channels2", "enc_layers",
                  "enc_units", "dec_layers", "dec_units", "embed_dim", "attn_dim",
                  "loc_channels", "loc_width", "multilingual"});
  ModelDims d;
  d.kind = get_or<std::string>(m, "kind", d.kind);
  d.feature_dim = get_or<std::size_t>(m, "feature_dim", d.feature_dim);
  d.vgg_channels1 = get_or<std::size_t>(m, "vgg_channels1", d.vgg_channels1);
  d.vgg_channels2 = get_or<std::size_t>(m, "vgg_channels2", d.vgg_channels2);
  d.enc_layers = get_or<std::size_t>(m, "enc_layers", d.enc_layers);
  d.enc_units = get_or<std::size_t>(m, "enc_units", d.enc_units);
  d.dec_layers = get_or<std::size_t>(m, "dec_layers", d.dec_layers);
  d.dec_units = get_or<std::size_t>(m, "dec_units", d.dec_units);
  d.embed_dim = get_or<std::size_t>(m, "embed_dim", d.embed_dim);
  d.attn_dim = get_or<std::size_t>(m, "attn_dim", d.attn_dim);
  d.loc_channels = get_or<std::size_t>(m, "loc_channels", d.loc_channels);
  d.loc_width = get_or<std::size_t>(m, "loc_width", d.loc_width);
  d.multilingual = get_or<bool>(m, "multilingual", d.multilingual);
  if (d.kind != "asr" && d.kind != "st" && d.kind != "nmt" && d.kind != "lm") {
    throw ConfigError("model.kind must be one of asr, st, nmt, lm");
  }
  return d;
}

TrainingConfig parse_training(const json& t) {
  reject_unknown(t, "training",
                 {"epochs", "batch_size", "lambda", "label_smoothing", "dropout",
                  "sampling_prob_max", "weight_decay", "grad_clip", "optimizer",
                  "adadelta", "adam", "speed_perturb"});
  TrainingConfig cfg;
  cfg.epochs = get_or<std::size_t>(t, "epochs", cfg.epochs);
  cfg.batch_size = get_or<std::size_t>(t, "batch_size", cfg.batch_size);
  cfg.lambda = get_or<double>(t, "lambda", cfg.lambda);
  cfg.label_smoothing = get_or<double>(t, "label_smoothing", cfg.label_smoothing);
  cfg.dropout = get_or<double>(t, "dropout", cfg.dropout);
  cfg.sampling_prob_max = get_or<double>(t, "sampling_prob_max", cfg.sampling_prob_max);
  cfg.weight_decay = get_or<double>(t, "weight_decay", cfg.weight_decay);
  cfg.grad_clip = get_or<double>(t, "grad_clip", cfg.grad_clip);
  cfg.optimizer = get_or<std::string>(t, "optimizer", cfg.optimizer);
  if (t.contains("adadelta")) {
    const json& a = t.at("adadelta");
    reject_unknown(a, "training.adadelta", {"rho", "eps"});
    cfg.adadelta.rho = get_or<double>(a, "rho", cfg.adadelta.rho);
    cfg.adadelta.eps = get_or<double>(a, "eps", cfg.adadelta.eps);
  }
  if (t.contains("adam")) {
    const json& a = t.at("adam");
    reject_unknown(a, "training.adam", {"alpha", "beta1", "beta2", "eps"});
    cfg.adam.alpha = get_or<double>(a, "alpha", cfg.adam.alpha);
    cfg.adam.beta1 = get_or<double>(a, "beta1", cfg.adam.beta1);
    cfg.adam.beta2 = get_or<double>(a, "beta2", cfg.adam.beta2);
    cfg.adam.eps = get_or<double>(a, "eps", cfg.adam.eps);
  }
  if (t.contains("speed_perturb")) {
    cfg.speed_perturb_factors = t.at("speed_perturb").get<std::vector<double>>();
  }
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0) {
    throw ConfigError("training.lambda must lie in [0,1]");
  }
  if (cfg.label_smoothing < 0.0 || cfg.label_smoothing >= 1.0) {
    throw ConfigError("training.label_smoothing must lie in [0,1)");
  }
  if (cfg.sampling_prob_max < 0.0 || cfg.sampling_prob_max > 1.0) {
    throw ConfigError("training.sampling_prob_max must lie in [0,1]");
  }
  if (cfg.optimizer != "adadelta" && cfg.optimizer != "adam") {
    throw ConfigError("training.optimizer must be adadelta or adam");
  }
  return cfg;
}

}  // namespace

RunConfig RunConfig::parse_json(const std::string& text) {
  json j = parse_json_text(text, "config");
  reject_unknown(j, "<root>",
                 {"seed", "data", "model", "training", "decoding", "transfer"});
  RunConfig cfg;
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  if (j.contains("data")) {
    const json& data = j.at("data");
    cfg.corpus_dir = get_or<std::string>(data, "corpus_dir", "");
    cfg.max_frames = get_or<std::size_t>(data, "max_frames", cfg.max_frames);
    cfg.max_chars = get_or<std::size_t>(data, "max_chars", cfg.max_chars);
    cfg.synthetic = parse_synthetic(data);
    cfg.has_synthetic = data.contains("pairs");
  }
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("training")) cfg.training = parse_training(j.at("training"));
  cfg.training.seed = cfg.seed;
  if (j.contains("decoding")) {
    const json& d = j.at("decoding");
    reject_unknown(d, "decoding",
                   {"beam_width", "max_len_ratio", "ctc_weight", "lm_weight",
                    "length_penalty", "nbest", "lm_checkpoint", "force_target_lang"});
    cfg.beam.width = get_or<std::size_t>(d, "beam_width", cfg.beam.width);
    cfg.beam.max_len_ratio = get_or<double>(d, "max_len_ratio", cfg.beam.max_len_ratio);
    cfg.beam.ctc_weight = get_or<double>(d, "ctc_weight", cfg.beam.ctc_weight);
    cfg.beam.lm_weight = get_or<double>(d, "lm_weight", cfg.beam.lm_weight);
    cfg.beam.length_penalty = get_or<double>(d, "length_penalty", cfg.beam.length_penalty);
    cfg.beam.nbest = get_or<std::size_t>(d, "nbest", cfg.beam.nbest);
    cfg.lm_checkpoint = get_or<std::string>(d, "lm_checkpoint", "");
    cfg.force_target_lang = get_or<std::string>(d, "force_target_lang", "");
  }
  if (j.contains("transfer")) {
    const json& t = j.at("transfer");
    reject_unknown(t, "transfer", {"init", "criterion_loss"});
    cfg.transfer_init = get_or<std::string>(t, "init", cfg.transfer_init);
    cfg.criterion_loss = get_or<double>(t, "criterion_loss", cfg.criterion_loss);
    if (cfg.transfer_init != "seed" && cfg.transfer_init != "random") {
      throw ConfigError("transfer.init must be seed or random");
    }
  }
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_json(text);
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  json data;
  if (!corpus_dir.empty()) data["corpus_dir"] = corpus_dir;
  data["max_frames"] = max_frames;
  data["max_chars"] = max_chars;
  if (has_synthetic) {
    data["feature_dim"] = synthetic.feature_dim;
    data["frames_per_char"] = synthetic.frames_per_char;
    data["noise_sigma"] = synthetic.noise_sigma;
    data["utterance_chars"] = synthetic.utterance_chars;
    data["train_count"] = synthetic.train_count;
    data["dev_count"] = synthetic.dev_count;
    data["test_count"] = synthetic.test_count;
    data["seed"] = synthetic.seed;
    data["reorder_window"] = synthetic.reorder_window;
    json pairs = json::array();
    for (const auto& [src, tgt] : synthetic.pairs) {
      pairs.push_back({{"src", src}, {"tgt", tgt}});
    }
    data["pairs"] = pairs;
    data["alphabets"] = synthetic.alphabets;
  }
  j["data"] = data;
  j["model"] = json::parse(model.to_json());
  j["training"] = {
      {"epochs", training.epochs},
      {"batch_size", training.batch_size},
      {"lambda", training.lambda},
      {"label_smoothing", training.label_smoothing},
      {"dropout", training.dropout},
      {"sampling_prob_max", training.sampling_prob_max},
      {"weight_decay", training.weight_decay},
      {"grad_clip", training.grad_clip},
      {"optimizer", training.optimizer},
      {"adadelta", {{"rho", training.adadelta.rho}, {"eps", training.adadelta.eps}}},
      {"adam",
       {{"alpha", training.adam.alpha},
        {"beta1", training.adam.beta1},
        {"beta2", training.adam.beta2},
        {"eps", training.adam.eps}}},
      {"speed_perturb", training.speed_perturb_factors},
  };
  j["decoding"] = {
      {"beam_width", beam.width},
      {"max_len_ratio", beam.max_len_ratio},
      {"ctc_weight", beam.ctc_weight},
      {"lm_weight", beam.lm_weight},
      {"length_penalty", beam.length_penalty},
      {"nbest", beam.nbest},
      {"lm_checkpoint", lm_checkpoint},
      {"force_target_lang", force_target_lang},
  };
  j["transfer"] = {{"init", transfer_init}, {"criterion_loss", criterion_loss}};
  return j.dump(2);
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text << '\n';
}

void echo_resolved(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text((fs::path(out_dir) / "resolved.json").string(), cfg.to_json());
}

Corpus load_training_corpus(const RunConfig& cfg) {
  if (cfg.corpus_dir.empty()) {
    throw ConfigError("config needs data.corpus_dir pointing at a generated corpus");
  }
  Corpus corpus = load_corpus(cfg.corpus_dir);
  FilterStats stats;
  corpus = length_filter(corpus, cfg.max_frames, cfg.max_chars, &stats);
  if (stats.removed_frames + stats.removed_chars > 0) {
    std::cerr << "length filter removed " << stats.removed_frames << " (frames) + "
              << stats.removed_chars << " (chars) utterances\n";
  }
  return corpus;
}

std::string trace_json(const TrainOutcome& outcome) {
  json j;
  j["best_epoch"] = outcome.best_epoch;
  j["best_val_loss"] = outcome.best_val_loss;
  j["epochs_to_criterion"] = outcome.epochs_to_criterion;
  j["epochs"] = json::array();
  for (const auto& e : outcome.trace) {
    j["epochs"].push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  return j.dump(2);
}

std::size_t epochs_to_criterion(const std::vector<EpochStats>& trace, double criterion) {
  if (criterion <= 0.0) return 0;
  for (const auto& e : trace) {
    if (e.val_loss <= criterion) return e.epoch;
  }
  return 0;
}

TrainOutcome finish_training(TrainResult result, const RunConfig& cfg,
                             const std::string& out_dir) {
  TrainOutcome outcome;
  outcome.best_val_loss = result.best_val_loss;
  outcome.best_epoch = result.best_epoch;
  outcome.trace = result.trace;
  outcome.epochs_to_criterion = epochs_to_criterion(result.trace, cfg.criterion_loss);
  fs::create_directories(out_dir);
  outcome.checkpoint_path = (fs::path(out_dir) / "checkpoint.best.ckpt").string();
  result.best.save(outcome.checkpoint_path);
  write_text((fs::path(out_dir) / "trace.json").string(), trace_json(outcome));
  echo_resolved(cfg, out_dir);
  return outcome;
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg, const std::string& out_dir, bool force) {
  if (!cfg.has_synthetic) {
    throw ConfigError("gen-data needs a data section with pairs and alphabets");
  }
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) {
      throw DataError("output directory '" + out_dir +
                      "' is not empty (pass --force to overwrite)");
    }
    fs::remove_all(out_dir);
  }
  Corpus corpus = generate_synthetic_corpus(cfg.synthetic);
  save_corpus(corpus, out_dir);
  echo_resolved(cfg, out_dir);
  std::cout << "wrote " << corpus.train.size() << " train / " << corpus.dev.size()
            << " dev / " << corpus.test.size() << " test utterances to " << out_dir
            << "\n";
}

TrainOutcome cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  Corpus corpus = load_training_corpus(cfg);
  Vocabulary vocab = Vocabulary::build(corpus);
  std::unique_ptr<Model> model = make_model(cfg.model, vocab, cfg.seed);
  TrainResult result = train_model(*model, corpus, cfg.training);
  TrainOutcome outcome = finish_training(std::move(result), cfg, out_dir);
  std::cout << "trained " << cfg.model.kind << " for " << cfg.training.epochs
            << " epochs; best val loss " << outcome.best_val_loss << " at epoch "
            << outcome.best_epoch << "\n";
  return outcome;
}

namespace {

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt) {
  Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
  std::unique_ptr<Model> model = make_model(ckpt.dims, vocab, 0);
  restore(*model, ckpt);
  return model;
}

}  // namespace

std::string cmd_decode(const RunConfig& cfg, const std::string& checkpoint,
                       const std::string& split, const std::string& out_dir) {
  Checkpoint ckpt = Checkpoint::load(checkpoint);
  std::unique_ptr<Model> model = model_from_checkpoint(ckpt);
  if (model->fingerprint() != ckpt.fingerprint) {
    throw DataError("checkpoint fingerprint mismatch: the file does not match its "
                    "recorded model configuration");
  }
  if (cfg.corpus_dir.empty()) throw ConfigError("decode needs data.corpus_dir");
  Corpus corpus = load_corpus(cfg.corpus_dir);

  std::unique_ptr<Model> lm_holder;
  RnnLm* lm = nullptr;
  if (!cfg.lm_checkpoint.empty()) {
    Checkpoint lm_ckpt = Checkpoint::load(cfg.lm_checkpoint);
    lm_holder = model_from_checkpoint(lm_ckpt);
    lm = dynamic_cast<RnnLm*>(lm_holder.get());
    if (lm == nullptr) throw ConfigError("decoding.lm_checkpoint is not an lm model");
    if (lm_holder->vocab() != model->vocab()) {
      throw DataError("language model vocabulary does not match the decoder vocabulary");
    }
  }

  const auto& utts = corpus.split(split);
  if (utts.empty()) throw DataError("split '" + split + "' is empty");
  std::vector<NbestRecord> records;
  for (const auto& utt : utts) {
    std::vector<Hypothesis> hyps =
        decode_utterance(*model, utt, cfg.beam, lm, cfg.force_target_lang);
    for (std::size_t rank = 0; rank < hyps.size(); ++rank) {
      const Hypothesis& h = hyps[rank];
      NbestRecord r;
      r.id = utt.id;
      r.rank = rank;
      r.text = model->vocab().decode(h.tokens);
      r.att = h.att_score;
      r.ctc = cfg.beam.ctc_weight * h.ctc_score;
      r.lm = cfg.beam.lm_weight * h.lm_score;
      r.penalty = cfg.beam.length_penalty * static_cast<double>(h.tokens.size());
      r.combined = h.combined(cfg.beam);
      records.push_back(std::move(r));
    }
  }
  fs::create_directories(out_dir);
  const std::string nbest_path = (fs::path(out_dir) / ("nbest." + split + ".tsv")).string();
  write_nbest(nbest_path, records);
  echo_resolved(cfg, out_dir);
  std::cout << "decoded " << utts.size() << " utterances from split '" << split
            << "' into " << nbest_path << "\n";
  return nbest_path;
}

EvalOutcome cmd_eval(const std::string& hyp_path, const std::string& corpus_dir,
                     const std::string& split, const std::string& metric,
                     const std::string& ref_field, bool strip_punct,
                     const std::string& out_dir) {
  if (metric != "bleu" && metric != "wer" && metric != "cer") {
    throw ConfigError("metric must be bleu, wer or cer");
  }
  std::string field = ref_field;
  if (field.empty()) field = metric == "wer" ? "transcript" : "translation";
  if (field != "transcript" && field != "translation") {
    throw ConfigError("ref-field must be transcript or translation");
  }

  Corpus corpus = load_corpus(corpus_dir);
  const auto& utts = corpus.split(split);
  std::map<std::string, const Utterance*> by_id;
  for (const auto& u : utts) by_id[u.id] = &u;

  std::map<std::string, std::string> best_text;
  for (const auto& rec : read_nbest(hyp_path)) {
    if (rec.rank == 0) best_text[rec.id] = rec.text;
  }
  std::vector<std::string> missing;
  for (const auto& u : utts) {
    if (!best_text.count(u.id)) missing.push_back(u.id);
  }
  if (!missing.empty()) {
    std::string msg = "hypotheses missing for ids:";
    for (const auto& id : missing) msg += " " + id;
    throw DataError(msg);
  }

  EvalReport report;
  report.metric = metric;
  report.corpus_id = corpus_dir + ":" + split;
  double corpus_score = 0.0;
  if (metric == "bleu") {
    std::vector<std::string> hyps;
    std::vector<std::vector<std::string>> ref_sets;
    for (const auto& u : utts) {
      hyps.push_back(best_text[u.id]);
      if (field == "transcript") {
        ref_sets.push_back({u.transcript});
      } else {
        ref_sets.push_back(u.translations);
      }
      report.ids.push_back(u.id);
      std::vector<std::vector<std::string>> refs;
      for (const auto& r : ref_sets.back()) refs.push_back(eval_tokens(r, strip_punct));
      report.sentence_scores.push_back(
          bleu_from_stats(sentence_bleu_stats(eval_tokens(hyps.back(), strip_punct), refs)));
    }
    corpus_score = corpus_bleu(hyps, ref_sets, strip_punct);
  } else if (metric == "wer") {
    std::vector<std::vector<std::string>> refs, hyps;
    for (const auto& u : utts) {
      const std::string& ref_text = field == "transcript" ? u.transcript : u.translations[0];
      refs.push_back(eval_tokens(ref_text, strip_punct));
      hyps.push_back(eval_tokens(best_text[u.id], strip_punct));
      report.ids.push_back(u.id);
      report.sentence_scores.push_back(wer(refs.back(), hyps.back()));
    }
    corpus_score = corpus_wer(refs, hyps);
  } else {
    std::vector<std::string> refs, hyps;
    for (const auto& u : utts) {
      refs.push_back(field == "transcript" ? u.transcript : u.translations[0]);
      hyps.push_back(best_text[u.id]);
      report.ids.push_back(u.id);
      report.sentence_scores.push_back(corpus_cer({refs.back()}, {hyps.back()}));
    }
    corpus_score = corpus_cer(refs, hyps);
  }
  report.corpus_score = corpus_score;

  fs::create_directories(out_dir);
  EvalOutcome outcome;
  outcome.metric = metric;
  outcome.corpus_score = corpus_score;
  outcome.report_path = (fs::path(out_dir) / ("report." + metric + ".tsv")).string();
  report.save(outcome.report_path);
  std::cout << metric << " = " << corpus_score << " over " << utts.size()
            << " sentences (" << outcome.report_path << ")\n";
  return outcome;
}

TrainOutcome cmd_transfer(const RunConfig& cfg, const std::string& seed_checkpoint,
                          const std::string& out_dir) {
  Corpus corpus = load_training_corpus(cfg);
  Checkpoint seed = Checkpoint::load(seed_checkpoint);
  Vocabulary vocab = Vocabulary::from_tokens(seed.vocab_tokens);
  // the fine-tuning pair's target text must be coverable by the seed
  // vocabulary; its source side enters as features only
  ModelDims dims = seed.dims;
  StModel model(dims, vocab, cfg.seed);
  if (cfg.transfer_init == "seed") {
    TransferSources sources;
    sources.st = &seed;
    init_transfer(model, sources);
  }
  TrainResult result = train_model(model, corpus, cfg.training);
  TrainOutcome outcome = finish_training(std::move(result), cfg, out_dir);
  std::cout << "fine-tuned from " << (cfg.transfer_init == "seed" ? seed_checkpoint
                                                                  : "random init")
            << "; best val loss " << outcome.best_val_loss;
  if (cfg.criterion_loss > 0.0) {
    std::cout << "; epochs to criterion " << cfg.criterion_loss << ": "
              << (outcome.epochs_to_criterion == 0
                      ? std::string("never")
                      : std::to_string(outcome.epochs_to_criterion));
  }
  std::cout << "\n";
  return outcome;
}

namespace {

struct LegResult {
  std::string name;
  bool multilingual = false;
  double best_val_loss = 0.0;
  double dev_cer = -1.0;
  std::size_t epochs_to_criterion = 0;
  std::string checkpoint_path;

  double metric(const std::string& key) const {
    if (key == "val_loss") return best_val_loss;
    if (key == "dev_cer") return dev_cer;
    if (key == "epochs_to_criterion") {
      // "never reached" must compare worse than any reached count
      return epochs_to_criterion == 0 ? 1e9 : static_cast<double>(epochs_to_criterion);
    }
    throw ConfigError("unknown comparison metric '" + key + "'");
  }
};

double greedy_dev_cer(const std::string& checkpoint_path, const std::string& corpus_dir,
                      std::size_t max_frames, std::size_t max_chars) {
  Checkpoint ckpt = Checkpoint::load(checkpoint_path);
  std::unique_ptr<Model> model = model_from_checkpoint(ckpt);
  Corpus corpus = length_filter(load_corpus(corpus_dir), max_frames, max_chars);
  std::vector<std::string> refs, hyps;
  for (const auto& utt : corpus.dev) {
    refs.push_back(utt.translations[0]);
    hyps.push_back(model->vocab().decode(greedy_decode_utterance(*model, utt)));
  }
  return corpus_cer(refs, hyps);
}

}  // namespace

int cmd_experiment(const std::string& manifest_path, const std::string& out_dir,
                   bool force) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot open experiment manifest '" + manifest_path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json manifest = parse_json_text(text, "experiment manifest");
  reject_unknown(manifest, "<root>", {"legs", "comparisons"});
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    throw DataError("output directory '" + out_dir +
                    "' is not empty (pass --force to overwrite)");
  }
  fs::create_directories(out_dir);

  std::map<std::string, LegResult> results;
  std::vector<std::string> leg_order;
  for (const auto& leg : manifest.at("legs")) {
    reject_unknown(leg, "legs[]",
                   {"name", "command", "config", "seed_checkpoint", "eval_cer"});
    const std::string name = leg.at("name").get<std::string>();
    if (results.count(name)) throw ConfigError("duplicate experiment leg '" + name + "'");
    const std::string command = get_or<std::string>(leg, "command", "train");
    RunConfig cfg = RunConfig::parse_json(leg.at("config").dump());
    const std::string leg_dir = (fs::path(out_dir) / name).string();

    LegResult r;
    r.name = name;
    TrainOutcome outcome;
    if (command == "train") {
      outcome = cmd_train(cfg, leg_dir);
    } else if (command == "transfer") {
      std::string seed_path = leg.at("seed_checkpoint").get<std::string>();
      if (!seed_path.empty() && seed_path[0] == '@') {
        const std::string ref = seed_path.substr(1);
        if (!results.count(ref)) {
          throw ConfigError("leg '" + name + "' references unknown leg '" + ref + "'");
        }
        seed_path = results.at(ref).checkpoint_path;
      }
      outcome = cmd_transfer(cfg, seed_path, leg_dir);
    } else {
      throw ConfigError("experiment legs support commands train and transfer");
    }
    r.best_val_loss = outcome.best_val_loss;
    r.epochs_to_criterion = outcome.epochs_to_criterion;
    r.checkpoint_path = outcome.checkpoint_path;
    {
      Corpus corpus = load_corpus(cfg.corpus_dir);
      r.multilingual = corpus.pairs.size() > 1;
    }
    if (get_or<bool>(leg, "eval_cer", false)) {
      r.dev_cer = greedy_dev_cer(outcome.checkpoint_path, cfg.corpus_dir, cfg.max_frames,
                                 cfg.max_chars);
    }
    results.emplace(name, r);
    leg_order.push_back(name);
  }

  std::ofstream table(fs::path(out_dir) / "comparison.tsv");
  table << "leg\tmultilingual\tval_loss\tdev_cer\tepochs_to_criterion\n";
  std::cout << "\nleg\tmultilingual\tval_loss\tdev_cer\tepochs_to_criterion\n";
  for (const auto& name : leg_order) {
    const LegResult& r = results.at(name);
    std::ostringstream line;
    line << r.name << '\t' << (r.multilingual ? "yes" : "--") << '\t' << r.best_val_loss
         << '\t';
    if (r.dev_cer >= 0.0) line << r.dev_cer;
    else line << "--";
    line << '\t';
    if (r.epochs_to_criterion > 0) line << r.epochs_to_criterion;
    else line << "--";
    table << line.str() << '\n';
    std::cout << line.str() << '\n';
  }

  bool all_hold = true;
  if (manifest.contains("comparisons")) {
    for (const auto& cmp : manifest.at("comparisons")) {
      reject_unknown(cmp, "comparisons[]", {"name", "metric", "expect_leq"});
      const std::string metric = cmp.at("metric").get<std::string>();
      const auto legs = cmp.at("expect_leq").get<std::vector<std::string>>();
      if (legs.size() != 2) throw ConfigError("expect_leq needs exactly two leg names");
      for (const auto& l : legs) {
        if (!results.count(l)) throw ConfigError("comparison references unknown leg '" + l + "'");
      }
      const double a = results.at(legs[0]).metric(metric);
      const double b = results.at(legs[1]).metric(metric);
      const bool holds = a <= b;
      all_hold = all_hold && holds;
      std::ostringstream line;
      line << (holds ? "[ok] " : "[FAIL] ") << get_or<std::string>(cmp, "name", metric)
           << ": " << legs[0] << " " << metric << " " << a << (holds ? " <= " : " > ")
           << legs[1] << " " << metric << " " << b;
      table << line.str() << '\n';
      std::cout << line.str() << '\n';
    }
  }
  return all_hold ? kOk : kGenericError;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"multilingual end-to-end speech translation at desk scale"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, split = "dev", hyp_path, corpus_dir;
  std::string metric = "bleu", ref_field, seed_checkpoint, manifest_path;
  bool force = false, strip_punct = false;
  std::optional<std::uint64_t> seed_override;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config) {
      cmd->add_option("--config", config_path, "json config path")->required();
    }
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--seed", seed_override, "override the config seed");
    cmd->add_flag("--force", force, "overwrite non-empty output directories");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen, true);

  CLI::App* train = app.add_subcommand("train", "train a model from a config");
  add_common(train, true);

  CLI::App* decode = app.add_subcommand("decode", "beam-search decode a split");
  add_common(decode, true);
  decode->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  decode->add_option("--split", split, "train, dev or test");

  CLI::App* eval = app.add_subcommand("eval", "score a decoded n-best file");
  eval->add_option("--hyp", hyp_path, "n-best file")->required();
  eval->add_option("--corpus", corpus_dir, "corpus directory")->required();
  eval->add_option("--split", split, "train, dev or test");
  eval->add_option("--metric", metric, "bleu, wer or cer");
  eval->add_option("--ref-field", ref_field, "transcript or translation");
  eval->add_flag("--strip-punct", strip_punct, "strip punctuation except apostrophe");
  eval->add_option("--out", out_dir, "output directory")->required();

  CLI::App* transfer = app.add_subcommand("transfer", "fine-tune from a seed checkpoint");
  add_common(transfer, true);
  transfer->add_option("--seed-checkpoint", seed_checkpoint, "donor checkpoint")->required();

  CLI::App* experiment = app.add_subcommand("experiment", "run legs and compare");
  experiment->add_option("--config", manifest_path, "experiment manifest")->required();
  experiment->add_option("--out", out_dir, "output directory")->required();
  experiment->add_flag("--force", force, "overwrite non-empty output directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed() || train->parsed() || decode->parsed() || transfer->parsed()) {
      RunConfig cfg = RunConfig::load_file(config_path);
      if (seed_override) {
        cfg.seed = *seed_override;
        cfg.training.seed = *seed_override;
        cfg.synthetic.seed = *seed_override;
      }
      if (gen->parsed()) cmd_gen_data(cfg, out_dir, force);
      if (train->parsed()) cmd_train(cfg, out_dir);
      if (decode->parsed()) cmd_decode(cfg, checkpoint, split, out_dir);
      if (transfer->parsed()) cmd_transfer(cfg, seed_checkpoint, out_dir);
      return kOk;
    }
    if (eval->parsed()) {
      cmd_eval(hyp_path, corpus_dir, split, metric, ref_field, strip_punct, out_dir);
      return kOk;
    }
    if (experiment->parsed()) {
      return cmd_experiment(manifest_path, out_dir, force);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kGenericError;
  }
  return kConfigError;
}

}  // namespace mst::cli
