// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mst/decoding.hpp"
#include "mst/metrics.hpp"
#include "mst/models.hpp"

namespace mst::cli {

constexpr int kOk = 0;
constexpr int kGenericError = 1;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericError = 4;

// One declarative config drives every command; unknown keys are rejected
// and the fully resolved config (defaults included) is echoed next to each
// command's outputs as resolved.json.
struct RunConfig {
  std::uint64_t seed = 1;

  bool has_synthetic = false;
  SyntheticSpec synthetic;
  std::string corpus_dir;
  std::size_t max_frames = 3000;
  std::size_t max_chars = 400;

  ModelDims model;
  TrainingConfig training;

  BeamConfig beam;
  std::string lm_checkpoint;
  std::string force_target_lang;

  std::string transfer_init = "seed";  // or "random"
  double criterion_loss = 0.0;         // 0 disables epochs-to-criterion

  std::string to_json() const;
  static RunConfig parse_json(const std::string& text);
  static RunConfig load_file(const std::string& path);
};

struct TrainOutcome {
  std::string checkpoint_path;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_to_criterion = 0;  // 0 = criterion unset or never reached
  std::vector<EpochStats> trace;
};

struct EvalOutcome {
  std::string metric;
  double corpus_score = 0.0;
  std::string report_path;
};

void cmd_gen_data(const RunConfig& cfg, const std::string& out_dir, bool force);
TrainOutcome cmd_train(const RunConfig& cfg, const std::string& out_dir);
std::string cmd_decode(const RunConfig& cfg, const std::string& checkpoint,
                       const std::string& split, const std::string& out_dir);
EvalOutcome cmd_eval(const std::string& hyp_path, const std::string& corpus_dir,
                     const std::string& split, const std::string& metric,
                     const std::string& ref_field, bool strip_punct,
                     const std::string& out_dir);
TrainOutcome cmd_transfer(const RunConfig& cfg, const std::string& seed_checkpoint,
                          const std::string& out_dir);
int cmd_experiment(const std::string& manifest_path, const std::string& out_dir,
                   bool force);

int run(int argc, const char* const* argv);

}  // namespace mst::cli
