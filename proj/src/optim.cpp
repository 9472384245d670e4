// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/optim.hpp"

#include <cmath>

namespace mst {

namespace {

// Uniform bounds that keep activations from collapsing layer over layer:
// sqrt(6 / (fan_in + fan_out)), with convolution fans counting their
// receptive field.
double fan_scaled_bound(const Shape& shape) {
  double fan_in = 1.0, fan_out = 1.0;
  if (shape.size() == 2) {
    fan_in = static_cast<double>(shape[0]);
    fan_out = static_cast<double>(shape[1]);
  } else if (shape.size() == 4) {
    fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
    fan_out = static_cast<double>(shape[0] * shape[2] * shape[3]);
  } else {
    fan_in = fan_out = static_cast<double>(shape_numel(shape));
  }
  return std::sqrt(6.0 / (fan_in + fan_out));
}

}  // namespace

Parameter& ParamStore::create(const std::string& name, Shape shape, Rng& rng,
                              double init_range) {
  if (params_.count(name)) throw NumericError("parameter '" + name + "' already exists");
  const double bound = init_range > 0.0 ? init_range : fan_scaled_bound(shape);
  auto p = std::make_shared<Parameter>();
  p->name = name;
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  p->data = std::make_shared<TensorData>(TensorData{std::move(shape), std::move(v)});
  auto& ref = *p;
  params_.emplace(name, std::move(p));
  return ref;
}

Parameter& ParamStore::create_constant(const std::string& name, Shape shape, double value) {
  if (params_.count(name)) throw NumericError("parameter '" + name + "' already exists");
  auto p = std::make_shared<Parameter>();
  p->name = name;
  p->data = std::make_shared<TensorData>(
      TensorData{shape, std::vector<double>(shape_numel(shape), value)});
  auto& ref = *p;
  params_.emplace(name, std::move(p));
  return ref;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw NumericError("unknown parameter '" + name + "'");
  return *it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw NumericError("unknown parameter '" + name + "'");
  return *it->second;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p->size();
  return n;
}

Optimizer Optimizer::adadelta(AdadeltaConfig cfg, double weight_decay) {
  Optimizer o;
  o.kind_ = Kind::Adadelta;
  o.adadelta_ = cfg;
  o.weight_decay_ = weight_decay;
  return o;
}

Optimizer Optimizer::adam(AdamConfig cfg, double weight_decay) {
  Optimizer o;
  o.kind_ = Kind::Adam;
  o.adam_ = cfg;
  o.weight_decay_ = weight_decay;
  return o;
}

Optimizer Optimizer::from_name(const std::string& name, double weight_decay) {
  if (name == "adadelta") return adadelta(AdadeltaConfig{}, weight_decay);
  if (name == "adam") return adam(AdamConfig{}, weight_decay);
  throw ConfigError("unknown optimizer '" + name + "' (expected adadelta or adam)");
}

void Optimizer::step(const std::vector<Parameter*>& params,
                     const std::vector<std::vector<double>>& grads) {
  if (params.size() != grads.size()) {
    throw NumericError("optimizer step: " + std::to_string(params.size()) +
                       " parameters vs " + std::to_string(grads.size()) + " gradients");
  }
  ++step_;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const std::vector<double>& g_in = grads[pi];
    if (g_in.size() != p.size()) {
      throw NumericError("optimizer step: gradient size " + std::to_string(g_in.size()) +
                         " does not match parameter '" + p.name + "' " +
                         shape_str(p.shape()));
    }
    Slot& slot = slots_[p.name];
    if (slot.acc_a.size() != p.size()) {
      slot.acc_a.assign(p.size(), 0.0);
      slot.acc_b.assign(p.size(), 0.0);
    }
    std::vector<double>& x = p.values();
    if (kind_ == Kind::Adadelta) {
      const double rho = adadelta_.rho, eps = adadelta_.eps;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double g = g_in[i] + weight_decay_ * x[i];
        slot.acc_a[i] = rho * slot.acc_a[i] + (1.0 - rho) * g * g;
        const double dx = -std::sqrt((slot.acc_b[i] + eps) / (slot.acc_a[i] + eps)) * g;
        slot.acc_b[i] = rho * slot.acc_b[i] + (1.0 - rho) * dx * dx;
        x[i] += dx;
      }
    } else {
      const double a = adam_.alpha, b1 = adam_.beta1, b2 = adam_.beta2, eps = adam_.eps;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double g = g_in[i] + weight_decay_ * x[i];
        slot.acc_a[i] = b1 * slot.acc_a[i] + (1.0 - b1) * g;
        slot.acc_b[i] = b2 * slot.acc_b[i] + (1.0 - b2) * g * g;
        const double mhat = slot.acc_a[i] / bc1;
        const double vhat = slot.acc_b[i] / bc2;
        x[i] -= a * mhat / (std::sqrt(vhat) + eps);
      }
    }
    check_finite("optimizer_step", x);
  }
}

double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g) v *= s;
  }
  return norm;
}

}  // namespace mst
