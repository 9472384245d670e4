// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mst/cli.hpp"
#include "mst/decoding.hpp"
#include "mst/layers.hpp"
#include "mst/metrics.hpp"

namespace py = pybind11;
using namespace mst;

namespace {

Tensor matrix_from(const std::vector<std::vector<double>>& rows, const char* what) {
  if (rows.empty() || rows[0].empty()) {
    throw NumericError(std::string(what) + ": empty matrix");
  }
  const std::size_t cols = rows[0].size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw NumericError(std::string(what) + ": ragged matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(flat));
}

py::dict outcome_dict(const cli::TrainOutcome& outcome) {
  py::dict d;
  d["checkpoint"] = outcome.checkpoint_path;
  d["best_val_loss"] = outcome.best_val_loss;
  d["best_epoch"] = outcome.best_epoch;
  d["epochs_to_criterion"] = outcome.epochs_to_criterion;
  py::list trace;
  for (const auto& e : outcome.trace) {
    py::dict row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["val_loss"] = e.val_loss;
    trace.append(row);
  }
  d["trace"] = trace;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "multilingual end-to-end speech translation at desk scale";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<NumericError>(m, "NumericError");

  m.def(
      "normalize_text",
      [](const std::string& raw, const std::string& side) {
        if (side != "source" && side != "target") {
          throw ConfigError("side must be 'source' or 'target'");
        }
        return normalize_text(raw, side == "source" ? TextSide::Source : TextSide::Target);
      },
      py::arg("text"), py::arg("side") = "source");

  m.def(
      "ctc_loss",
      [](const std::vector<std::vector<double>>& log_probs,
         const std::vector<std::size_t>& targets, std::size_t blank) {
        return ctc_loss(matrix_from(log_probs, "ctc_loss"), targets, blank).value();
      },
      py::arg("log_probs"), py::arg("targets"), py::arg("blank") = 0);

  m.def(
      "ctc_prefix_score",
      [](const std::vector<std::vector<double>>& log_probs,
         const std::vector<std::size_t>& prefix, std::size_t blank) {
        return ctc_prefix_score(matrix_from(log_probs, "ctc_prefix_score"), prefix, blank);
      },
      py::arg("log_probs"), py::arg("prefix"), py::arg("blank") = 0);

  m.def(
      "label_smoothed_nll",
      [](const std::vector<double>& logits, std::size_t target, double eps) {
        return label_smoothed_nll(Tensor({1, logits.size()}, logits), {target}, eps)
            .value();
      },
      py::arg("logits"), py::arg("target"), py::arg("eps") = 0.0);

  m.def("corpus_bleu", &corpus_bleu, py::arg("hypotheses"), py::arg("reference_sets"),
        py::arg("strip_punct") = false);
  m.def("corpus_wer", &corpus_wer, py::arg("references"), py::arg("hypotheses"));
  m.def("corpus_cer", &corpus_cer, py::arg("references"), py::arg("hypotheses"));
  m.def("edit_distance", &edit_distance, py::arg("reference"), py::arg("hypothesis"));

  m.def(
      "gen_data",
      [](const std::string& config_json, const std::string& out_dir, bool force) {
        cli::cmd_gen_data(cli::RunConfig::parse_json(config_json), out_dir, force);
      },
      py::arg("config_json"), py::arg("out_dir"), py::arg("force") = false);

  m.def(
      "train",
      [](const std::string& config_json, const std::string& out_dir) {
        return outcome_dict(cli::cmd_train(cli::RunConfig::parse_json(config_json), out_dir));
      },
      py::arg("config_json"), py::arg("out_dir"));

  m.def(
      "decode",
      [](const std::string& config_json, const std::string& checkpoint,
         const std::string& split, const std::string& out_dir) {
        return cli::cmd_decode(cli::RunConfig::parse_json(config_json), checkpoint, split,
                               out_dir);
      },
      py::arg("config_json"), py::arg("checkpoint"), py::arg("split"), py::arg("out_dir"));

  m.def(
      "evaluate",
      [](const std::string& hyp_path, const std::string& corpus_dir,
         const std::string& split, const std::string& metric, const std::string& ref_field,
         bool strip_punct, const std::string& out_dir) {
        return cli::cmd_eval(hyp_path, corpus_dir, split, metric, ref_field, strip_punct,
                             out_dir)
            .corpus_score;
      },
      py::arg("hyp_path"), py::arg("corpus_dir"), py::arg("split"), py::arg("metric"),
      py::arg("ref_field") = "", py::arg("strip_punct") = false, py::arg("out_dir"));

  m.def(
      "transfer",
      [](const std::string& config_json, const std::string& seed_checkpoint,
         const std::string& out_dir) {
        return outcome_dict(
            cli::cmd_transfer(cli::RunConfig::parse_json(config_json), seed_checkpoint,
                              out_dir));
      },
      py::arg("config_json"), py::arg("seed_checkpoint"), py::arg("out_dir"));
}
