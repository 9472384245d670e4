// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mst/data.hpp"
#include "mst/layers.hpp"
#include "mst/optim.hpp"

namespace mst {

struct ModelDims {
  std::string kind = "st";  // st | asr | nmt | lm
  std::size_t feature_dim = 8;
  std::size_t vgg_channels1 = 4;
  std::size_t vgg_channels2 = 8;
  std::size_t enc_layers = 2;
  std::size_t enc_units = 32;  // per direction
  std::size_t dec_layers = 2;
  std::size_t dec_units = 32;
  std::size_t embed_dim = 32;
  std::size_t attn_dim = 32;
  std::size_t loc_channels = 8;
  std::size_t loc_width = 11;
  bool multilingual = false;  // multilingual ASR emits <LID:xx> first

  std::string to_json() const;
  static ModelDims from_json(const std::string& text);
};

struct LossOptions {
  double sampling_prob = 0.0;    // scheduled sampling
  double dropout = 0.0;
  double label_smoothing = 0.0;
  double lambda = 0.3;           // ctc interpolation, asr only
  bool train = false;
  Rng* rng = nullptr;
};

// Shared speech front-end: two VGG blocks then a BLSTM stack.
struct SpeechEncoderParams {
  VggFrontParams vgg;
  BlstmStackParams blstm;
  std::size_t output_dim = 0;

  static SpeechEncoderParams create(ParamStore& store, const std::string& prefix,
                                    const ModelDims& dims, Rng& rng);
};

Tensor speech_encode(Binding& bind, const SpeechEncoderParams& p, const Utterance& utt,
                     const LossOptions& opts);

struct TextEncoderParams {
  Parameter* embed = nullptr;
  BlstmStackParams blstm;
  std::size_t output_dim = 0;

  static TextEncoderParams create(ParamStore& store, const std::string& prefix,
                                  const ModelDims& dims, std::size_t vocab, Rng& rng);
};

Tensor text_encode(Binding& bind, const TextEncoderParams& p,
                   const std::vector<std::size_t>& tokens, const LossOptions& opts);

// Two-layer LSTM decoder with attention; input at each step is the previous
// token's embedding concatenated with the attention context, the output
// projection reads the top state concatenated with the context.
struct AttentionDecoderParams {
  Parameter* embed = nullptr;
  std::vector<LstmParams> layers;
  AttentionParams attn;
  Parameter* w_out = nullptr;
  Parameter* b_out = nullptr;
  std::size_t units = 0;
  std::size_t enc_dim = 0;
  std::size_t vocab = 0;

  static AttentionDecoderParams create(ParamStore& store, const std::string& prefix,
                                       AttentionKind kind, const ModelDims& dims,
                                       std::size_t enc_dim, std::size_t vocab, Rng& rng);

  struct State {
    std::vector<LstmState> lstm;
    Tensor align;  // (s, 1)
    Tensor query;  // (1, units), top hidden of the previous step
  };

  State start(std::size_t enc_frames) const;
  // log-probs (1, vocab) for the token following `token`, plus the new state
  std::pair<Tensor, State> step(Binding& bind, const Tensor& enc, const State& state,
                                std::size_t token, const LossOptions& opts) const;
  // teacher-forced, per-token-averaged, label-smoothed loss
  Tensor sequence_loss(Binding& bind, const Tensor& enc, const DecoderIo& io,
                       const LossOptions& opts) const;
};

struct AsrLosses {
  Tensor att;
  Tensor ctc;
  Tensor joint;
};

class Model {
 public:
  Model(ModelDims dims, Vocabulary vocab);
  virtual ~Model() = default;

  const ModelDims& dims() const { return dims_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::uint64_t fingerprint() const;

  // Teacher-forced batch loss, averaged per token then over utterances.
  virtual Tensor batch_loss(Binding& bind, const std::vector<const Utterance*>& batch,
                            const LossOptions& opts) = 0;

 protected:
  ModelDims dims_;
  Vocabulary vocab_;
  ParamStore params_;
};

class AsrModel : public Model {
 public:
  AsrModel(ModelDims dims, Vocabulary vocab, std::uint64_t seed);
  AsrLosses forward(Binding& bind, const std::vector<const Utterance*>& batch,
                    const LossOptions& opts);
  Tensor batch_loss(Binding& bind, const std::vector<const Utterance*>& batch,
                    const LossOptions& opts) override;
  Tensor encode(Binding& bind, const Utterance& utt, const LossOptions& opts);
  // (frames, vocab) normalized ctc log-probs for decoding
  Tensor ctc_log_probs(Binding& bind, const Tensor& enc);
  const AttentionDecoderParams& decoder() const { return dec_; }

 private:
  SpeechEncoderParams enc_;
  AttentionDecoderParams dec_;
  Parameter* ctc_w_ = nullptr;
  Parameter* ctc_b_ = nullptr;
};

class StModel : public Model {
 public:
  StModel(ModelDims dims, Vocabulary vocab, std::uint64_t seed);
  Tensor batch_loss(Binding& bind, const std::vector<const Utterance*>& batch,
                    const LossOptions& opts) override;
  Tensor encode(Binding& bind, const Utterance& utt, const LossOptions& opts);
  const AttentionDecoderParams& decoder() const { return dec_; }

 private:
  SpeechEncoderParams enc_;
  AttentionDecoderParams dec_;
};

class NmtModel : public Model {
 public:
  NmtModel(ModelDims dims, Vocabulary vocab, std::uint64_t seed);
  Tensor batch_loss(Binding& bind, const std::vector<const Utterance*>& batch,
                    const LossOptions& opts) override;
  // encodes the (punctuation-stripped) source transcript
  Tensor encode(Binding& bind, const Utterance& utt, const LossOptions& opts);
  const AttentionDecoderParams& decoder() const { return dec_; }

 private:
  TextEncoderParams enc_;
  AttentionDecoderParams dec_;
};

class RnnLm : public Model {
 public:
  RnnLm(ModelDims dims, Vocabulary vocab, std::uint64_t seed);
  Tensor batch_loss(Binding& bind, const std::vector<const Utterance*>& batch,
                    const LossOptions& opts) override;
  // per-token NLL of one sequence (no <sos>/<eos>, they are added here)
  Tensor sequence_nll(Binding& bind, const std::vector<std::size_t>& tokens,
                      const LossOptions& opts);

  struct State {
    std::vector<LstmState> lstm;
  };
  State start() const;
  // consumes `token`, returns log-probs (1, vocab) of the next one
  std::pair<Tensor, State> step(Binding& bind, const State& state, std::size_t token) const;

 private:
  Parameter* embed_ = nullptr;
  std::vector<LstmParams> layers_;
  Parameter* w_out_ = nullptr;
  Parameter* b_out_ = nullptr;
};

std::unique_ptr<Model> make_model(const ModelDims& dims, const Vocabulary& vocab,
                                  std::uint64_t seed);

// ---- checkpoints -------------------------------------------------------------
// Binary container: magic "MSTCKPT1", u32 version, u64 config fingerprint,
// u64 step count, model dims json, vocabulary block, then (name, shape,
// row-major doubles) records, little-endian throughout.

struct Checkpoint {
  ModelDims dims;
  std::uint64_t fingerprint = 0;
  std::uint64_t step_count = 0;
  std::vector<std::string> vocab_tokens;
  std::vector<std::pair<std::string, TensorData>> entries;  // name-sorted

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
  const TensorData* find(const std::string& name) const;
};

Checkpoint snapshot(const Model& model, std::uint64_t step_count = 0);
// Full restore; every entry must exist with a matching shape.
void restore(Model& model, const Checkpoint& ckpt);
// Copies donor entries whose names start with `prefix` into the model.
// Missing or mismatched parameters raise DataError listing their names.
void transfer_prefix(Model& model, const Checkpoint& donor, const std::string& prefix);

struct TransferSources {
  const Checkpoint* asr = nullptr;  // donates the speech encoder
  const Checkpoint* nmt = nullptr;  // donates the translation decoder + output
  const Checkpoint* st = nullptr;   // donates everything
};

// Applies the requested donors to a fresh ST model; decoder/full transfers
// require identical vocabularies.
void init_transfer(StModel& model, const TransferSources& sources);

// ---- training ----------------------------------------------------------------

struct TrainingConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double lambda = 0.3;
  double label_smoothing = 0.1;
  double dropout = 0.2;
  double sampling_prob_max = 0.4;  // linear ramp from 0 across epochs
  double weight_decay = 1e-6;
  double grad_clip = 5.0;
  std::string optimizer = "adadelta";
  AdadeltaConfig adadelta{};
  AdamConfig adam{};
  std::vector<double> speed_perturb_factors;  // empty = off
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochStats> trace;
  std::size_t best_epoch = 0;  // 0 = initialization
  double best_val_loss = 0.0;
};

// Average teacher-forced loss over a split (no sampling, no dropout).
double evaluate_loss(Model& model, const std::vector<Utterance>& split,
                     const TrainingConfig& cfg);

TrainResult train_model(Model& model, const Corpus& corpus, const TrainingConfig& cfg);

}  // namespace mst
