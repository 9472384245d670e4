// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

using nlohmann::json;

namespace mst {

namespace {

Tensor average_scalars(const std::vector<Tensor>& xs) {
  Tensor acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return xs.size() == 1 ? acc : scale(acc, 1.0 / static_cast<double>(xs.size()));
}

}  // namespace

std::string ModelDims::to_json() const {
  json j;
  j["kind"] = kind;
  j["feature_dim"] = feature_dim;
  j["vgg_channels1"] = vgg_channels1;
  j["vgg_channels2"] = vgg_channels2;
  j["enc_layers"] = enc_layers;
  j["enc_units"] = enc_units;
  j["dec_layers"] = dec_layers;
  j["dec_units"] = dec_units;
  j["embed_dim"] = embed_dim;
  j["attn_dim"] = attn_dim;
  j["loc_channels"] = loc_channels;
  j["loc_width"] = loc_width;
  j["multilingual"] = multilingual;
  return j.dump();
}

ModelDims ModelDims::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelDims d;
  d.kind = j.at("kind").get<std::string>();
  d.feature_dim = j.at("feature_dim").get<std::size_t>();
  d.vgg_channels1 = j.at("vgg_channels1").get<std::size_t>();
  d.vgg_channels2 = j.at("vgg_channels2").get<std::size_t>();
  d.enc_layers = j.at("enc_layers").get<std::size_t>();
  d.enc_units = j.at("enc_units").get<std::size_t>();
  d.dec_layers = j.at("dec_layers").get<std::size_t>();
  d.dec_units = j.at("dec_units").get<std::size_t>();
  d.embed_dim = j.at("embed_dim").get<std::size_t>();
  d.attn_dim = j.at("attn_dim").get<std::size_t>();
  d.loc_channels = j.at("loc_channels").get<std::size_t>();
  d.loc_width = j.at("loc_width").get<std::size_t>();
  d.multilingual = j.at("multilingual").get<bool>();
  return d;
}

SpeechEncoderParams SpeechEncoderParams::create(ParamStore& store,
                                                const std::string& prefix,
                                                const ModelDims& dims, Rng& rng) {
  SpeechEncoderParams p;
  p.vgg = VggFrontParams::create(store, prefix, dims.vgg_channels1, dims.vgg_channels2, rng);
  const std::size_t vgg_dim =
      VggFrontParams::output_dim(dims.feature_dim, dims.vgg_channels2);
  p.blstm = BlstmStackParams::create(store, prefix + ".blstm", dims.enc_layers, vgg_dim,
                                     dims.enc_units, rng);
  p.output_dim = 2 * dims.enc_units;
  return p;
}

Tensor speech_encode(Binding& bind, const SpeechEncoderParams& p, const Utterance& utt,
                     const LossOptions& opts) {
  if (utt.frames == 0) throw DataError("utterance '" + utt.id + "' has no frames");
  Tensor frames({utt.frames, utt.feature_dim}, utt.features);
  Tensor fronted = vgg_front_forward(bind, p.vgg, frames);
  return blstm_forward(bind, p.blstm, fronted, opts.dropout, opts.rng, opts.train);
}

TextEncoderParams TextEncoderParams::create(ParamStore& store, const std::string& prefix,
                                            const ModelDims& dims, std::size_t vocab,
                                            Rng& rng) {
  TextEncoderParams p;
  p.embed = &store.create(prefix + ".embed", {vocab, dims.embed_dim}, rng);
  p.blstm = BlstmStackParams::create(store, prefix + ".blstm", dims.enc_layers,
                                     dims.embed_dim, dims.enc_units, rng);
  p.output_dim = 2 * dims.enc_units;
  return p;
}

Tensor text_encode(Binding& bind, const TextEncoderParams& p,
                   const std::vector<std::size_t>& tokens, const LossOptions& opts) {
  if (tokens.empty()) throw DataError("text encoder got an empty token sequence");
  Tensor emb = select_rows(bind(*p.embed), tokens);
  return blstm_forward(bind, p.blstm, emb, opts.dropout, opts.rng, opts.train);
}

AttentionDecoderParams AttentionDecoderParams::create(ParamStore& store,
                                                      const std::string& prefix,
                                                      AttentionKind kind,
                                                      const ModelDims& dims,
                                                      std::size_t enc_dim,
                                                      std::size_t vocab, Rng& rng) {
  AttentionDecoderParams p;
  p.units = dims.dec_units;
  p.enc_dim = enc_dim;
  p.vocab = vocab;
  p.embed = &store.create(prefix + ".embed", {vocab, dims.embed_dim}, rng);
  std::size_t in = dims.embed_dim + enc_dim;
  for (std::size_t l = 0; l < dims.dec_layers; ++l) {
    p.layers.push_back(LstmParams::create(store, prefix + ".l" + std::to_string(l), in,
                                          dims.dec_units, rng));
    in = dims.dec_units;
  }
  p.attn = AttentionParams::create(store, prefix + ".attn", kind, enc_dim, dims.dec_units,
                                   dims.attn_dim, rng, dims.loc_channels, dims.loc_width);
  p.w_out = &store.create(prefix + ".out.w", {dims.dec_units + enc_dim, vocab}, rng);
  p.b_out = &store.create_constant(prefix + ".out.b", {1, vocab}, 0.0);
  return p;
}

AttentionDecoderParams::State AttentionDecoderParams::start(std::size_t enc_frames) const {
  State s;
  for (const auto& layer : layers) s.lstm.push_back(lstm_initial_state(layer.hidden_size));
  s.align = Tensor::full({enc_frames, 1}, 1.0 / static_cast<double>(enc_frames));
  s.query = Tensor::zeros({1, units});
  return s;
}

std::pair<Tensor, AttentionDecoderParams::State> AttentionDecoderParams::step(
    Binding& bind, const Tensor& enc, const State& state, std::size_t token,
    const LossOptions& opts) const {
  AttendResult att = attend(bind, attn, enc, state.query, state.align);
  Tensor emb = select_rows(bind(*embed), {token});
  Tensor x = concat({emb, att.context}, 1);
  State next;
  next.lstm.reserve(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    LstmState ls = lstm_step(bind, layers[l], x, state.lstm[l]);
    next.lstm.push_back(ls);
    x = ls.h;
    if (opts.train && opts.rng && l + 1 < layers.size()) {
      x = dropout(x, opts.dropout, *opts.rng, opts.train);
    }
  }
  next.query = x;
  next.align = transpose(att.weights);
  Tensor out_in = concat({x, att.context}, 1);
  if (opts.train && opts.rng) out_in = dropout(out_in, opts.dropout, *opts.rng, opts.train);
  Tensor logits = add(matmul(out_in, bind(*w_out)), bind(*b_out));
  return {logits, std::move(next)};
}

Tensor AttentionDecoderParams::sequence_loss(Binding& bind, const Tensor& enc,
                                             const DecoderIo& io,
                                             const LossOptions& opts) const {
  State state = start(enc.rows());
  std::vector<Tensor> logit_rows;
  logit_rows.reserve(io.input.size());
  std::size_t feed = io.input[0];
  for (std::size_t i = 0; i < io.input.size(); ++i) {
    if (i > 0) {
      feed = io.input[i];
      if (opts.train && opts.rng && opts.sampling_prob > 0.0 &&
          opts.rng->bernoulli(opts.sampling_prob)) {
        // feed the model's own previous prediction instead of the reference
        const Tensor& prev = logit_rows.back();
        std::size_t best = 0;
        for (std::size_t v = 1; v < prev.size(); ++v)
          if (prev.at(v) > prev.at(best)) best = v;
        feed = best;
      }
    }
    auto [logits, next] = step(bind, enc, state, feed, opts);
    logit_rows.push_back(logits);
    state = std::move(next);
  }
  Tensor all = logit_rows.size() == 1 ? logit_rows[0] : concat(logit_rows, 0);
  return label_smoothed_nll(all, io.target, opts.label_smoothing);
}

Model::Model(ModelDims dims, Vocabulary vocab)
    : dims_(std::move(dims)), vocab_(std::move(vocab)) {}

std::uint64_t Model::fingerprint() const {
  std::string blob = dims_.to_json();
  for (const auto& t : vocab_.tokens()) {
    blob += '\x1f';
    blob += t;
  }
  return Rng::hash_str(blob);
}

AsrModel::AsrModel(ModelDims dims, Vocabulary vocab, std::uint64_t seed)
    : Model(std::move(dims), std::move(vocab)) {
  Rng rng(seed);
  enc_ = SpeechEncoderParams::create(params_, "encoder", dims_, rng);
  dec_ = AttentionDecoderParams::create(params_, "decoder", AttentionKind::Location,
                                        dims_, enc_.output_dim, vocab_.size(), rng);
  ctc_w_ = &params_.create("ctc.w", {enc_.output_dim, vocab_.size()}, rng);
  ctc_b_ = &params_.create_constant("ctc.b", {1, vocab_.size()}, 0.0);
}

Tensor AsrModel::encode(Binding& bind, const Utterance& utt, const LossOptions& opts) {
  return speech_encode(bind, enc_, utt, opts);
}

Tensor AsrModel::ctc_log_probs(Binding& bind, const Tensor& enc) {
  return log_softmax(add(matmul(enc, bind(*ctc_w_)), bind(*ctc_b_)));
}

AsrLosses AsrModel::forward(Binding& bind, const std::vector<const Utterance*>& batch,
                            const LossOptions& opts) {
  if (batch.empty()) throw DataError("asr forward: empty batch");
  std::vector<Tensor> att_losses, ctc_losses;
  for (const Utterance* utt : batch) {
    Tensor enc = encode(bind, *utt, opts);
    DecoderIo io = make_decoder_io(*utt, Task::Asr, vocab_, dims_.multilingual);
    att_losses.push_back(dec_.sequence_loss(bind, enc, io, opts));
    // ctc consumes the plain character reference; language-id tokens have no
    // frames to align to
    std::vector<std::size_t> ref = vocab_.encode_chars(utt->transcript);
    ctc_losses.push_back(ctc_loss(ctc_log_probs(bind, enc), ref, Vocabulary::kBlank));
  }
  AsrLosses out;
  out.att = average_scalars(att_losses);
  out.ctc = average_scalars(ctc_losses);
  out.joint = joint_asr_loss(out.att, out.ctc, opts.lambda);
  return out;
}

Tensor AsrModel::batch_loss(Binding& bind, const std::vector<const Utterance*>& batch,
                            const LossOptions& opts) {
  return forward(bind, batch, opts).joint;
}

StModel::StModel(ModelDims dims, Vocabulary vocab, std::uint64_t seed)
    : Model(std::move(dims), std::move(vocab)) {
  Rng rng(seed);
  enc_ = SpeechEncoderParams::create(params_, "encoder", dims_, rng);
  dec_ = AttentionDecoderParams::create(params_, "decoder", AttentionKind::Additive,
                                        dims_, enc_.output_dim, vocab_.size(), rng);
}

Tensor StModel::encode(Binding& bind, const Utterance& utt, const LossOptions& opts) {
  return speech_encode(bind, enc_, utt, opts);
}

Tensor StModel::batch_loss(Binding& bind, const std::vector<const Utterance*>& batch,
                           const LossOptions& opts) {
  if (batch.empty()) throw DataError("st forward: empty batch");
  std::vector<Tensor> losses;
  for (const Utterance* utt : batch) {
    Tensor enc = encode(bind, *utt, opts);
    DecoderIo io = make_decoder_io(*utt, Task::St, vocab_);
    losses.push_back(dec_.sequence_loss(bind, enc, io, opts));
  }
  return average_scalars(losses);
}

NmtModel::NmtModel(ModelDims dims, Vocabulary vocab, std::uint64_t seed)
    : Model(std::move(dims), std::move(vocab)) {
  Rng rng(seed);
  enc_ = TextEncoderParams::create(params_, "src_embed", dims_, vocab_.size(), rng);
  dec_ = AttentionDecoderParams::create(params_, "decoder", AttentionKind::Additive,
                                        dims_, enc_.output_dim, vocab_.size(), rng);
}

Tensor NmtModel::encode(Binding& bind, const Utterance& utt, const LossOptions& opts) {
  return text_encode(bind, enc_, vocab_.encode_chars(utt.transcript), opts);
}

Tensor NmtModel::batch_loss(Binding& bind, const std::vector<const Utterance*>& batch,
                            const LossOptions& opts) {
  if (batch.empty()) throw DataError("nmt forward: empty batch");
  std::vector<Tensor> losses;
  for (const Utterance* utt : batch) {
    Tensor enc = encode(bind, *utt, opts);
    DecoderIo io = make_decoder_io(*utt, Task::Nmt, vocab_);
    losses.push_back(dec_.sequence_loss(bind, enc, io, opts));
  }
  return average_scalars(losses);
}

RnnLm::RnnLm(ModelDims dims, Vocabulary vocab, std::uint64_t seed)
    : Model(std::move(dims), std::move(vocab)) {
  Rng rng(seed);
  embed_ = &params_.create("lm.embed", {vocab_.size(), dims_.embed_dim}, rng);
  std::size_t in = dims_.embed_dim;
  for (std::size_t l = 0; l < dims_.dec_layers; ++l) {
    layers_.push_back(
        LstmParams::create(params_, "lm.l" + std::to_string(l), in, dims_.dec_units, rng));
    in = dims_.dec_units;
  }
  w_out_ = &params_.create("lm.out.w", {dims_.dec_units, vocab_.size()}, rng);
  b_out_ = &params_.create_constant("lm.out.b", {1, vocab_.size()}, 0.0);
}

RnnLm::State RnnLm::start() const {
  State s;
  for (const auto& layer : layers_) s.lstm.push_back(lstm_initial_state(layer.hidden_size));
  return s;
}

std::pair<Tensor, RnnLm::State> RnnLm::step(Binding& bind, const State& state,
                                            std::size_t token) const {
  Tensor x = select_rows(bind(*embed_), {token});
  State next;
  next.lstm.reserve(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    LstmState ls = lstm_step(bind, layers_[l], x, state.lstm[l]);
    next.lstm.push_back(ls);
    x = ls.h;
  }
  Tensor logits = add(matmul(x, bind(*w_out_)), bind(*b_out_));
  return {log_softmax(logits), std::move(next)};
}

Tensor RnnLm::sequence_nll(Binding& bind, const std::vector<std::size_t>& tokens,
                           const LossOptions& opts) {
  std::vector<std::size_t> input = {Vocabulary::kSos};
  input.insert(input.end(), tokens.begin(), tokens.end());
  std::vector<std::size_t> target = tokens;
  target.push_back(Vocabulary::kEos);

  Tensor emb = select_rows(bind(*embed_), input);
  Tensor x = emb;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = lstm_sequence(bind, layers_[l], x);
    if (opts.train && opts.rng && l + 1 < layers_.size()) {
      x = dropout(x, opts.dropout, *opts.rng, opts.train);
    }
  }
  Tensor logits = add(matmul(x, bind(*w_out_)), bind(*b_out_));
  return label_smoothed_nll(logits, target, opts.label_smoothing);
}

Tensor RnnLm::batch_loss(Binding& bind, const std::vector<const Utterance*>& batch,
                         const LossOptions& opts) {
  if (batch.empty()) throw DataError("lm forward: empty batch");
  std::vector<Tensor> losses;
  for (const Utterance* utt : batch) {
    losses.push_back(sequence_nll(bind, vocab_.encode_chars(utt->transcript), opts));
  }
  return average_scalars(losses);
}

std::unique_ptr<Model> make_model(const ModelDims& dims, const Vocabulary& vocab,
                                  std::uint64_t seed) {
  if (dims.kind == "asr") return std::make_unique<AsrModel>(dims, vocab, seed);
  if (dims.kind == "st") return std::make_unique<StModel>(dims, vocab, seed);
  if (dims.kind == "nmt") return std::make_unique<NmtModel>(dims, vocab, seed);
  if (dims.kind == "lm") return std::make_unique<RnnLm>(dims, vocab, seed);
  throw ConfigError("unknown model kind '" + dims.kind + "'");
}

// ---- checkpoints -------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'S', 'T', 'C', 'K', 'P', 'T', '1'};

void write_string(std::ostream& out, const std::string& s) {
  const std::uint32_t len = static_cast<std::uint32_t>(s.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  std::uint32_t len;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw DataError("truncated checkpoint");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw DataError("truncated checkpoint");
  return s;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&fingerprint), sizeof(fingerprint));
  out.write(reinterpret_cast<const char*>(&step_count), sizeof(step_count));
  write_string(out, dims.to_json());
  const std::uint32_t vocab_count = static_cast<std::uint32_t>(vocab_tokens.size());
  out.write(reinterpret_cast<const char*>(&vocab_count), sizeof(vocab_count));
  for (const auto& t : vocab_tokens) write_string(out, t);
  const std::uint32_t param_count = static_cast<std::uint32_t>(entries.size());
  out.write(reinterpret_cast<const char*>(&param_count), sizeof(param_count));
  for (const auto& [name, data] : entries) {
    write_string(out, name);
    const std::uint32_t ndim = static_cast<std::uint32_t>(data.shape.size());
    out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
    for (std::size_t d : data.shape) {
      const std::uint64_t dim = d;
      out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    }
    out.write(reinterpret_cast<const char*>(data.values.data()),
              static_cast<std::streamsize>(data.values.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError("'" + path + "' is not a checkpoint file");
  }
  std::uint32_t version;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != 1) throw DataError("unsupported checkpoint version");
  Checkpoint ckpt;
  in.read(reinterpret_cast<char*>(&ckpt.fingerprint), sizeof(ckpt.fingerprint));
  in.read(reinterpret_cast<char*>(&ckpt.step_count), sizeof(ckpt.step_count));
  ckpt.dims = ModelDims::from_json(read_string(in));
  std::uint32_t vocab_count;
  in.read(reinterpret_cast<char*>(&vocab_count), sizeof(vocab_count));
  for (std::uint32_t i = 0; i < vocab_count; ++i) ckpt.vocab_tokens.push_back(read_string(in));
  std::uint32_t param_count;
  in.read(reinterpret_cast<char*>(&param_count), sizeof(param_count));
  if (!in) throw DataError("truncated checkpoint");
  for (std::uint32_t i = 0; i < param_count; ++i) {
    std::string name = read_string(in);
    std::uint32_t ndim;
    in.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
    Shape shape(ndim);
    for (auto& d : shape) {
      std::uint64_t dim;
      in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
      d = dim;
    }
    std::vector<double> values(shape_numel(shape));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint");
    ckpt.entries.emplace_back(std::move(name), TensorData{std::move(shape), std::move(values)});
  }
  return ckpt;
}

const TensorData* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, data] : entries)
    if (n == name) return &data;
  return nullptr;
}

Checkpoint snapshot(const Model& model, std::uint64_t step_count) {
  Checkpoint ckpt;
  ckpt.dims = model.dims();
  ckpt.fingerprint = model.fingerprint();
  ckpt.step_count = step_count;
  ckpt.vocab_tokens = model.vocab().tokens();
  for (const auto& [name, param] : model.params().all()) {
    ckpt.entries.emplace_back(name, *param->data);
  }
  return ckpt;
}

void restore(Model& model, const Checkpoint& ckpt) {
  std::vector<std::string> problems;
  for (const auto& [name, param] : model.params().all()) {
    const TensorData* donor = ckpt.find(name);
    if (donor == nullptr) {
      problems.push_back(name + " (missing)");
      continue;
    }
    if (donor->shape != param->shape()) {
      problems.push_back(name + " (" + shape_str(param->shape()) + " vs " +
                         shape_str(donor->shape) + ")");
    }
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint restore failed:";
    for (const auto& p : problems) msg += " " + p;
    throw DataError(msg);
  }
  for (const auto& [name, param] : model.params().all()) {
    param->data->values = ckpt.find(name)->values;
  }
}

void transfer_prefix(Model& model, const Checkpoint& donor, const std::string& prefix) {
  std::vector<std::string> problems;
  std::size_t copied = 0;
  for (const auto& [name, data] : donor.entries) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (!model.params().contains(name)) {
      problems.push_back(name + " (missing in target)");
      continue;
    }
    Parameter& p = model.params().get(name);
    if (p.shape() != data.shape) {
      problems.push_back(name + " (" + shape_str(p.shape()) + " vs " +
                         shape_str(data.shape) + ")");
      continue;
    }
    ++copied;
  }
  if (!problems.empty()) {
    std::string msg = "transfer with prefix '" + prefix + "' failed:";
    for (const auto& p : problems) msg += " " + p;
    throw DataError(msg);
  }
  if (copied == 0) {
    throw DataError("transfer with prefix '" + prefix + "' matched no parameters");
  }
  for (const auto& [name, data] : donor.entries) {
    if (name.rfind(prefix, 0) != 0) continue;
    model.params().get(name).data->values = data.values;
  }
}

void init_transfer(StModel& model, const TransferSources& sources) {
  auto check_vocab = [&model](const Checkpoint& donor, const char* what) {
    if (donor.vocab_tokens != model.vocab().tokens()) {
      throw DataError(std::string(what) +
                      " transfer requires an identical vocabulary (output layers are copied)");
    }
  };
  if (sources.st) {
    check_vocab(*sources.st, "seed");
    transfer_prefix(model, *sources.st, "");
  }
  if (sources.asr) {
    transfer_prefix(model, *sources.asr, "encoder");
  }
  if (sources.nmt) {
    check_vocab(*sources.nmt, "decoder");
    transfer_prefix(model, *sources.nmt, "decoder");
  }
}

// ---- training ----------------------------------------------------------------

namespace {

std::vector<const Utterance*> gather(const std::vector<Utterance>& split,
                                     const std::vector<std::size_t>& indices) {
  std::vector<const Utterance*> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(&split[i]);
  return out;
}

}  // namespace

double evaluate_loss(Model& model, const std::vector<Utterance>& split,
                     const TrainingConfig& cfg) {
  if (split.empty()) throw DataError("cannot evaluate on an empty split");
  LossOptions opts;
  opts.label_smoothing = cfg.label_smoothing;
  opts.lambda = cfg.lambda;
  double total = 0.0;
  std::size_t count = 0;
  const std::size_t batch = std::max<std::size_t>(cfg.batch_size, 1);
  for (std::size_t base = 0; base < split.size(); base += batch) {
    const std::size_t end = std::min(base + batch, split.size());
    std::vector<const Utterance*> ptrs;
    for (std::size_t i = base; i < end; ++i) ptrs.push_back(&split[i]);
    Tape tape;
    Binding bind(tape);
    Tensor loss = model.batch_loss(bind, ptrs, opts);
    total += loss.value() * static_cast<double>(ptrs.size());
    count += ptrs.size();
  }
  return total / static_cast<double>(count);
}

TrainResult train_model(Model& model, const Corpus& corpus, const TrainingConfig& cfg) {
  if (corpus.train.empty()) throw DataError("training corpus is empty");
  std::vector<Utterance> train = corpus.train;
  if (!cfg.speed_perturb_factors.empty()) {
    std::vector<Utterance> augmented;
    for (const auto& u : train) {
      for (auto& v : speed_perturb(u, cfg.speed_perturb_factors))
        augmented.push_back(std::move(v));
    }
    train = std::move(augmented);
  }

  if (cfg.optimizer != "adadelta" && cfg.optimizer != "adam") {
    throw ConfigError("unknown optimizer '" + cfg.optimizer + "'");
  }
  Optimizer opt = cfg.optimizer == "adadelta"
                      ? Optimizer::adadelta(cfg.adadelta, cfg.weight_decay)
                      : Optimizer::adam(cfg.adam, cfg.weight_decay);

  std::vector<Parameter*> param_list;
  for (const auto& [name, p] : model.params().all()) param_list.push_back(p.get());

  TrainResult result;
  result.best_val_loss = corpus.dev.empty()
                             ? 0.0
                             : evaluate_loss(model, corpus.dev, cfg);
  result.best = snapshot(model, 0);
  result.best_epoch = 0;

  Rng run_rng(cfg.seed);
  std::uint64_t steps = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double sampling =
        cfg.epochs > 1 ? cfg.sampling_prob_max * static_cast<double>(epoch - 1) /
                             static_cast<double>(cfg.epochs - 1)
                       : 0.0;
    Rng epoch_rng = run_rng.fork(epoch);
    BatchPlan plan = bucket_batches(train, cfg.batch_size, cfg.seed + epoch);
    double train_loss = 0.0;
    std::size_t seen = 0;
    for (const auto& batch_idx : plan.batches) {
      LossOptions opts;
      opts.train = true;
      opts.sampling_prob = sampling;
      opts.dropout = cfg.dropout;
      opts.label_smoothing = cfg.label_smoothing;
      opts.lambda = cfg.lambda;
      opts.rng = &epoch_rng;
      std::vector<const Utterance*> batch = gather(train, batch_idx);
      Tape tape;
      Binding bind(tape);
      Tensor loss = model.batch_loss(bind, batch, opts);
      tape.backward(loss);
      std::vector<std::vector<double>> grads;
      grads.reserve(param_list.size());
      for (Parameter* p : param_list) {
        if (bind.bound(*p)) {
          grads.push_back(tape.grad(bind.leaf_of(*p)));
        } else {
          grads.emplace_back(p->size(), 0.0);
        }
      }
      clip_global_norm(grads, cfg.grad_clip);
      opt.step(param_list, grads);
      ++steps;
      train_loss += loss.value() * static_cast<double>(batch.size());
      seen += batch.size();
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_loss / static_cast<double>(seen);
    stats.val_loss = corpus.dev.empty() ? stats.train_loss
                                        : evaluate_loss(model, corpus.dev, cfg);
    result.trace.push_back(stats);
    if (stats.val_loss < result.best_val_loss) {
      result.best_val_loss = stats.val_loss;
      result.best = snapshot(model, steps);
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace mst
