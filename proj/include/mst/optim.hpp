// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mst/tensor.hpp"

namespace mst {

// Named learnable tensor. Storage is shared with tape leaves during a step.
struct Parameter {
  std::string name;
  std::shared_ptr<TensorData> data;

  std::size_t size() const { return data->values.size(); }
  const Shape& shape() const { return data->shape; }
  std::vector<double>& values() { return data->values; }
  const std::vector<double>& values() const { return data->values; }
};

// Ordered registry keyed by name; iteration order is the update order, so
// optimizer state and training traces are reproducible.
class ParamStore {
 public:
  // init_range > 0: uniform in [-init_range, init_range]. init_range <= 0:
  // fan-scaled uniform bounds (signal-preserving through deep fronts).
  Parameter& create(const std::string& name, Shape shape, Rng& rng,
                    double init_range = 0.0);
  Parameter& create_constant(const std::string& name, Shape shape, double value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, std::shared_ptr<Parameter>>& all() { return params_; }
  const std::map<std::string, std::shared_ptr<Parameter>>& all() const { return params_; }
  std::size_t total_values() const;

 private:
  std::map<std::string, std::shared_ptr<Parameter>> params_;
};

struct AdadeltaConfig {
  double rho = 0.95;
  double eps = 1e-8;
};

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter accumulator state for either update rule.
class Optimizer {
 public:
  enum class Kind { Adadelta, Adam };

  static Optimizer adadelta(AdadeltaConfig cfg, double weight_decay = 0.0);
  static Optimizer adam(AdamConfig cfg, double weight_decay = 0.0);
  static Optimizer from_name(const std::string& name, double weight_decay = 0.0);

  Kind kind() const { return kind_; }
  std::uint64_t steps() const { return step_; }

  // One update over aligned (parameter, gradient) pairs. Gradients are not
  // modified; weight decay enters as an additive gradient term.
  void step(const std::vector<Parameter*>& params,
            const std::vector<std::vector<double>>& grads);

 private:
  struct Slot {
    std::vector<double> acc_a;  // adadelta: E[g^2];  adam: first moment
    std::vector<double> acc_b;  // adadelta: E[dx^2]; adam: second moment
  };

  Kind kind_ = Kind::Adadelta;
  AdadeltaConfig adadelta_{};
  AdamConfig adam_{};
  double weight_decay_ = 0.0;
  std::uint64_t step_ = 0;
  std::map<std::string, Slot> slots_;
};

// Scales all gradients in place so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm);

}  // namespace mst
