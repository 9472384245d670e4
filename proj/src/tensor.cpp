// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mst {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ",";
    out << shape[i];
  }
  out << ")";
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw NumericError("tensor: shape " + shape_str(shape) + " needs " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(values.size()));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw NumericError("tensor: zero dimension in " + shape_str(shape));
  }
  data_ = std::make_shared<TensorData>(TensorData{std::move(shape), std::move(values)});
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw NumericError("rows: tensor is not rank-2, shape " + shape_str(shape()));
  return data_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw NumericError("cols: tensor is not rank-2, shape " + shape_str(shape()));
  return data_->shape[1];
}

double Tensor::value() const {
  if (size() != 1) {
    throw NumericError("value: tensor has " + std::to_string(size()) + " elements, expected 1");
  }
  return data_->values[0];
}

void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("op '") + op + "' produced a non-finite value");
    }
  }
}

Tensor Tape::leaf(const std::shared_ptr<TensorData>& storage) {
  nodes_.push_back(Node{"leaf", storage->values.size(), {}, nullptr});
  Tensor t;
  t.data_ = storage;
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size()) - 1;
  return t;
}

Tensor Tape::record(const char* op, TensorData out, BackwardFn backward) {
  check_finite(op, out.values);
  nodes_.push_back(Node{op, out.values.size(), {}, std::move(backward)});
  Tensor t;
  t.data_ = std::make_shared<TensorData>(std::move(out));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size()) - 1;
  return t;
}

void Tape::backward(const Tensor& root) {
  if (root.tape() != this) throw NumericError("backward: root is not on this tape");
  if (root.size() != 1) {
    throw NumericError("backward: root must be scalar, shape " + shape_str(root.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  accumulate(root.node(), {1.0});
  for (int i = root.node(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.grad.empty() && n.backward) n.backward(*this, n.grad);
  }
}

std::vector<double> Tape::grad(const Tensor& t) const {
  if (t.tape() != this) throw NumericError("grad: tensor is not on this tape");
  const Node& n = nodes_[static_cast<std::size_t>(t.node())];
  if (n.grad.empty()) return std::vector<double>(t.size(), 0.0);
  return n.grad;
}

void Tape::accumulate(int node, const std::vector<double>& g) {
  accumulate_scaled(node, g, 1.0);
}

void Tape::accumulate_scaled(int node, const std::vector<double>& g, double s) {
  if (node < 0) return;
  Node& n = nodes_[static_cast<std::size_t>(node)];
  if (n.grad.empty()) n.grad.assign(n.numel, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += s * g[i];
}

namespace {

Tape* common_tape(const char* op, std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->defined()) throw NumericError(std::string(op) + ": undefined input tensor");
    if (t->tape() == nullptr) continue;
    if (tape != nullptr && tape != t->tape()) {
      throw NumericError(std::string(op) + ": inputs live on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

// Emits either a recorded node or a detached constant when no input carries
// a tape. `backward` receives the output gradient.
Tensor emit(Tape* tape, const char* op, TensorData out, Tape::BackwardFn backward) {
  if (tape == nullptr) {
    check_finite(op, out.values);
    Tensor t(std::move(out.shape), std::move(out.values));
    return t;
  }
  return tape->record(op, std::move(out), std::move(backward));
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw NumericError(std::string(op) + ": expected rank-2 tensor, got shape " +
                       shape_str(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* tape = common_tape("matmul", {&a, &b});
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw NumericError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return emit(tape, "matmul", {{m, n}, std::move(out)},
              [a, b, m, k, n](Tape& t, const std::vector<double>& g) {
                if (a.node() >= 0) {
                  std::vector<double> da(m * k, 0.0);
                  const auto& bv = b.values();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                      const double gij = g[i * n + j];
                      if (gij == 0.0) continue;
                      for (std::size_t p = 0; p < k; ++p)
                        da[i * k + p] += gij * bv[p * n + j];
                    }
                  t.accumulate(a.node(), da);
                }
                if (b.node() >= 0) {
                  std::vector<double> db(k * n, 0.0);
                  const auto& av = a.values();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      const double aip = av[i * k + p];
                      if (aip == 0.0) continue;
                      for (std::size_t j = 0; j < n; ++j)
                        db[p * n + j] += aip * g[i * n + j];
                    }
                  t.accumulate(b.node(), db);
                }
              });
}

namespace {

enum class EwKind { Add, Sub, Mul };

Tensor elementwise2(const char* op, EwKind kind, const Tensor& a, const Tensor& b) {
  Tape* tape = common_tape(op, {&a, &b});
  const bool same = a.shape() == b.shape();
  const bool rowb = !same && a.rank() == 2 && b.rank() == 2 && b.rows() == 1 &&
                    b.cols() == a.cols();
  if (!same && !rowb) {
    throw NumericError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  const std::size_t n = av.size();
  const std::size_t bn = bv.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i];
    const double y = bv[same ? i : i % bn];
    out[i] = kind == EwKind::Add ? x + y : kind == EwKind::Sub ? x - y : x * y;
  }
  return emit(tape, op, {a.shape(), std::move(out)},
              [kind, same, a, b, n, bn](Tape& t, const std::vector<double>& g) {
                if (a.node() >= 0) {
                  if (kind == EwKind::Mul) {
                    std::vector<double> da(n);
                    const auto& bv = b.values();
                    for (std::size_t i = 0; i < n; ++i) da[i] = g[i] * bv[same ? i : i % bn];
                    t.accumulate(a.node(), da);
                  } else {
                    t.accumulate(a.node(), g);
                  }
                }
                if (b.node() >= 0) {
                  std::vector<double> db(bn, 0.0);
                  const auto& av = a.values();
                  const double sign = kind == EwKind::Sub ? -1.0 : 1.0;
                  for (std::size_t i = 0; i < n; ++i) {
                    db[same ? i : i % bn] +=
                        kind == EwKind::Mul ? g[i] * av[i] : sign * g[i];
                  }
                  t.accumulate(b.node(), db);
                }
              });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise2("add", EwKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise2("sub", EwKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise2("mul", EwKind::Mul, a, b); }

Tensor scale(const Tensor& a, double c) {
  Tape* tape = common_tape("scale", {&a});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
  return emit(tape, "scale", {a.shape(), std::move(out)},
              [a, c](Tape& t, const std::vector<double>& g) {
                t.accumulate_scaled(a.node(), g, c);
              });
}

Tensor add_scalar(const Tensor& a, double c) {
  Tape* tape = common_tape("add_scalar", {&a});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + c;
  return emit(tape, "add_scalar", {a.shape(), std::move(out)},
              [a](Tape& t, const std::vector<double>& g) { t.accumulate(a.node(), g); });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw NumericError("concat: no inputs");
  if (axis != 0 && axis != 1) throw NumericError("concat: axis must be 0 or 1");
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    require_rank2("concat", p);
    Tape* pt = common_tape("concat", {&p});
    if (pt) {
      if (tape && tape != pt) throw NumericError("concat: inputs live on different tapes");
      tape = pt;
    }
  }
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    const std::size_t pf = axis == 0 ? p.cols() : p.rows();
    if (pf != fixed) {
      throw NumericError("concat: shape " + shape_str(p.shape()) + " does not match " +
                         shape_str(parts[0].shape()) + " on the fixed axis");
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  const std::size_t m = axis == 0 ? total : fixed;
  const std::size_t n = axis == 0 ? fixed : total;
  std::vector<double> out(m * n);
  if (axis == 0) {
    std::size_t r = 0;
    for (const auto& p : parts) {
      std::copy(p.values().begin(), p.values().end(), out.begin() + r * n);
      r += p.rows();
    }
  } else {
    std::size_t c = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p.cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < pc; ++j) out[i * n + c + j] = p.at(i * pc + j);
      c += pc;
    }
  }
  std::vector<Tensor> held = parts;
  return emit(tape, "concat", {{m, n}, std::move(out)},
              [held, axis, m, n](Tape& t, const std::vector<double>& g) {
                std::size_t off = 0;
                for (const auto& p : held) {
                  const std::size_t pr = p.rows(), pc = p.cols();
                  if (p.node() >= 0) {
                    std::vector<double> dp(pr * pc);
                    if (axis == 0) {
                      std::copy(g.begin() + off * n, g.begin() + (off + pr) * n, dp.begin());
                    } else {
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < pc; ++j)
                          dp[i * pc + j] = g[i * n + off + j];
                    }
                    t.accumulate(p.node(), dp);
                  }
                  off += axis == 0 ? pr : pc;
                }
              });
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  Tape* tape = common_tape("slice", {&a});
  require_rank2("slice", a);
  if (axis != 0 && axis != 1) throw NumericError("slice: axis must be 0 or 1");
  const std::size_t limit = axis == 0 ? a.rows() : a.cols();
  if (begin >= end || end > limit) {
    throw NumericError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                       ") invalid for shape " + shape_str(a.shape()));
  }
  const std::size_t m = axis == 0 ? end - begin : a.rows();
  const std::size_t n = axis == 0 ? a.cols() : end - begin;
  const std::size_t ac = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = axis == 0 ? a.at((begin + i) * ac + j) : a.at(i * ac + begin + j);
  return emit(tape, "slice", {{m, n}, std::move(out)},
              [a, axis, begin, m, n, ac](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(a.size(), 0.0);
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) {
                    if (axis == 0)
                      da[(begin + i) * ac + j] = g[i * n + j];
                    else
                      da[i * ac + begin + j] = g[i * n + j];
                  }
                t.accumulate(a.node(), da);
              });
}

Tensor transpose(const Tensor& a) {
  Tape* tape = common_tape("transpose", {&a});
  require_rank2("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i * n + j);
  return emit(tape, "transpose", {{n, m}, std::move(out)},
              [a, m, n](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(m * n);
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) da[i * n + j] = g[j * m + i];
                t.accumulate(a.node(), da);
              });
}

namespace {

template <typename Fwd, typename Dy>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Dy dy_from_out) {
  Tape* tape = common_tape(op, {&a});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.at(i));
  TensorData data{a.shape(), std::move(out)};
  std::vector<double> snapshot = data.values;
  return emit(tape, op, std::move(data),
              [a, snapshot, dy_from_out](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(g.size());
                for (std::size_t i = 0; i < g.size(); ++i)
                  da[i] = g[i] * dy_from_out(snapshot[i], a.at(i));
                t.accumulate(a.node(), da);
              });
}

}  // namespace

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double y, double) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double y, double) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {

std::vector<double> softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double hi = a.at(i * n);
    for (std::size_t j = 1; j < n; ++j) hi = std::max(hi, a.at(i * n + j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(a.at(i * n + j) - hi);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return out;
}

}  // namespace

Tensor softmax(const Tensor& a) {
  Tape* tape = common_tape("softmax", {&a});
  require_rank2("softmax", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out = softmax_rows(a);
  std::vector<double> snapshot = out;
  return emit(tape, "softmax", {{m, n}, std::move(out)},
              [a, snapshot, m, n](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(m * n);
                for (std::size_t i = 0; i < m; ++i) {
                  double dot = 0.0;
                  for (std::size_t j = 0; j < n; ++j)
                    dot += g[i * n + j] * snapshot[i * n + j];
                  for (std::size_t j = 0; j < n; ++j)
                    da[i * n + j] = snapshot[i * n + j] * (g[i * n + j] - dot);
                }
                t.accumulate(a.node(), da);
              });
}

Tensor log_softmax(const Tensor& a) {
  Tape* tape = common_tape("log_softmax", {&a});
  require_rank2("log_softmax", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> soft = softmax_rows(a);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(soft[i]);
  return emit(tape, "log_softmax", {{m, n}, std::move(out)},
              [a, soft, m, n](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(m * n);
                for (std::size_t i = 0; i < m; ++i) {
                  double gsum = 0.0;
                  for (std::size_t j = 0; j < n; ++j) gsum += g[i * n + j];
                  for (std::size_t j = 0; j < n; ++j)
                    da[i * n + j] = g[i * n + j] - soft[i * n + j] * gsum;
                }
                t.accumulate(a.node(), da);
              });
}

Tensor sum(const Tensor& a) {
  Tape* tape = common_tape("sum", {&a});
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
  const std::size_t n = a.size();
  return emit(tape, "sum", {{1}, {acc}},
              [a, n](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                t.accumulate(a.node(), std::vector<double>(n, g[0]));
              });
}

Tensor mean(const Tensor& a) {
  Tape* tape = common_tape("mean", {&a});
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
  const std::size_t n = a.size();
  return emit(tape, "mean", {{1}, {acc / static_cast<double>(n)}},
              [a, n](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                t.accumulate(a.node(),
                             std::vector<double>(n, g[0] / static_cast<double>(n)));
              });
}

Tensor row_sums(const Tensor& a) {
  Tape* tape = common_tape("row_sums", {&a});
  require_rank2("row_sums", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.at(i * n + j);
  return emit(tape, "row_sums", {{m, 1}, std::move(out)},
              [a, m, n](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(m * n);
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) da[i * n + j] = g[i];
                t.accumulate(a.node(), da);
              });
}

Tensor pick_cols(const Tensor& a, const std::vector<std::size_t>& indices) {
  Tape* tape = common_tape("pick_cols", {&a});
  require_rank2("pick_cols", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (indices.size() != m) {
    throw NumericError("pick_cols: " + std::to_string(indices.size()) +
                       " indices for shape " + shape_str(a.shape()));
  }
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (indices[i] >= n) {
      throw NumericError("pick_cols: index " + std::to_string(indices[i]) +
                         " out of range for shape " + shape_str(a.shape()));
    }
    out[i] = a.at(i * n + indices[i]);
  }
  return emit(tape, "pick_cols", {{m, 1}, std::move(out)},
              [a, indices, m, n](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(m * n, 0.0);
                for (std::size_t i = 0; i < m; ++i) da[i * n + indices[i]] = g[i];
                t.accumulate(a.node(), da);
              });
}

Tensor select_rows(const Tensor& a, const std::vector<std::size_t>& indices) {
  Tape* tape = common_tape("select_rows", {&a});
  require_rank2("select_rows", a);
  const std::size_t v = a.rows(), n = a.cols(), k = indices.size();
  if (k == 0) throw NumericError("select_rows: empty index list");
  std::vector<double> out(k * n);
  for (std::size_t r = 0; r < k; ++r) {
    if (indices[r] >= v) {
      throw NumericError("select_rows: index " + std::to_string(indices[r]) +
                         " out of range for shape " + shape_str(a.shape()));
    }
    std::copy(a.values().begin() + indices[r] * n,
              a.values().begin() + (indices[r] + 1) * n, out.begin() + r * n);
  }
  return emit(tape, "select_rows", {{k, n}, std::move(out)},
              [a, indices, n, k](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(a.size(), 0.0);
                for (std::size_t r = 0; r < k; ++r)
                  for (std::size_t j = 0; j < n; ++j)
                    da[indices[r] * n + j] += g[r * n + j];
                t.accumulate(a.node(), da);
              });
}

Tensor max_pool2d(const Tensor& a) {
  Tape* tape = common_tape("max_pool2d", {&a});
  if (a.rank() != 3) {
    throw NumericError("max_pool2d: expected rank-3 tensor, got shape " + shape_str(a.shape()));
  }
  const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  std::vector<double> out(c * oh * ow);
  std::vector<std::size_t> argmax(c * oh * ow);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t yy = 2 * y + dy, xx = 2 * x + dx;
            if (yy >= h || xx >= w) continue;
            const std::size_t idx = (ci * h + yy) * w + xx;
            if (a.at(idx) > best) {
              best = a.at(idx);
              best_idx = idx;
            }
          }
        out[(ci * oh + y) * ow + x] = best;
        argmax[(ci * oh + y) * ow + x] = best_idx;
      }
  return emit(tape, "max_pool2d", {{c, oh, ow}, std::move(out)},
              [a, argmax](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(a.size(), 0.0);
                for (std::size_t i = 0; i < g.size(); ++i) da[argmax[i]] += g[i];
                t.accumulate(a.node(), da);
              });
}

Tensor conv2d_3x3(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  Tape* tape = common_tape("conv2d_3x3", {&x, &kernel, &bias});
  if (x.rank() != 3 || kernel.rank() != 4 || bias.rank() != 1) {
    throw NumericError("conv2d_3x3: expected input (cin,h,w), kernel (cout,cin,3,3), bias "
                       "(cout); got " + shape_str(x.shape()) + ", " +
                       shape_str(kernel.shape()) + ", " + shape_str(bias.shape()));
  }
  const std::size_t cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t cout = kernel.shape()[0];
  if (kernel.shape()[1] != cin || kernel.shape()[2] != 3 || kernel.shape()[3] != 3 ||
      bias.shape()[0] != cout) {
    throw NumericError("conv2d_3x3: incompatible shapes " + shape_str(x.shape()) + ", " +
                       shape_str(kernel.shape()) + ", " + shape_str(bias.shape()));
  }
  std::vector<double> out(cout * h * w, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double acc = bias.at(co);
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t dy = 0; dy < 3; ++dy)
            for (std::size_t dx = 0; dx < 3; ++dx) {
              const long sy = static_cast<long>(y) + static_cast<long>(dy) - 1;
              const long sx = static_cast<long>(xx) + static_cast<long>(dx) - 1;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w))
                continue;
              acc += x.at((ci * h + sy) * w + sx) * kernel.at(((co * cin + ci) * 3 + dy) * 3 + dx);
            }
        out[(co * h + y) * w + xx] = acc;
      }
  return emit(tape, "conv2d_3x3", {{cout, h, w}, std::move(out)},
              [x, kernel, bias, cin, cout, h, w](Tape& t, const std::vector<double>& g) {
                std::vector<double> dx_buf, dk_buf, db_buf;
                if (x.node() >= 0) dx_buf.assign(x.size(), 0.0);
                if (kernel.node() >= 0) dk_buf.assign(kernel.size(), 0.0);
                if (bias.node() >= 0) db_buf.assign(bias.size(), 0.0);
                for (std::size_t co = 0; co < cout; ++co)
                  for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t xx = 0; xx < w; ++xx) {
                      const double go = g[(co * h + y) * w + xx];
                      if (go == 0.0) continue;
                      if (!db_buf.empty()) db_buf[co] += go;
                      for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t dy = 0; dy < 3; ++dy)
                          for (std::size_t dx = 0; dx < 3; ++dx) {
                            const long sy = static_cast<long>(y) + static_cast<long>(dy) - 1;
                            const long sx = static_cast<long>(xx) + static_cast<long>(dx) - 1;
                            if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) ||
                                sx >= static_cast<long>(w))
                              continue;
                            const std::size_t xi = (ci * h + sy) * w + sx;
                            const std::size_t ki = ((co * cin + ci) * 3 + dy) * 3 + dx;
                            if (!dx_buf.empty()) dx_buf[xi] += go * kernel.at(ki);
                            if (!dk_buf.empty()) dk_buf[ki] += go * x.at(xi);
                          }
                    }
                if (!dx_buf.empty()) t.accumulate(x.node(), dx_buf);
                if (!dk_buf.empty()) t.accumulate(kernel.node(), dk_buf);
                if (!db_buf.empty()) t.accumulate(bias.node(), db_buf);
              });
}

Tensor conv1d_same(const Tensor& x, const Tensor& kernel) {
  Tape* tape = common_tape("conv1d_same", {&x, &kernel});
  require_rank2("conv1d_same", x);
  require_rank2("conv1d_same", kernel);
  if (x.cols() != 1) {
    throw NumericError("conv1d_same: signal must be (t,1), got " + shape_str(x.shape()));
  }
  const std::size_t tlen = x.rows(), k = kernel.rows(), width = kernel.cols();
  if (width % 2 == 0) throw NumericError("conv1d_same: kernel width must be odd");
  const long pad = static_cast<long>(width / 2);
  std::vector<double> out(tlen * k, 0.0);
  for (std::size_t ti = 0; ti < tlen; ++ti)
    for (std::size_t ki = 0; ki < k; ++ki) {
      double acc = 0.0;
      for (std::size_t d = 0; d < width; ++d) {
        const long s = static_cast<long>(ti) + static_cast<long>(d) - pad;
        if (s < 0 || s >= static_cast<long>(tlen)) continue;
        acc += x.at(static_cast<std::size_t>(s)) * kernel.at(ki * width + d);
      }
      out[ti * k + ki] = acc;
    }
  return emit(tape, "conv1d_same", {{tlen, k}, std::move(out)},
              [x, kernel, tlen, k, width, pad](Tape& t, const std::vector<double>& g) {
                std::vector<double> dx_buf, dk_buf;
                if (x.node() >= 0) dx_buf.assign(tlen, 0.0);
                if (kernel.node() >= 0) dk_buf.assign(k * width, 0.0);
                for (std::size_t ti = 0; ti < tlen; ++ti)
                  for (std::size_t ki = 0; ki < k; ++ki) {
                    const double go = g[ti * k + ki];
                    if (go == 0.0) continue;
                    for (std::size_t d = 0; d < width; ++d) {
                      const long s = static_cast<long>(ti) + static_cast<long>(d) - pad;
                      if (s < 0 || s >= static_cast<long>(tlen)) continue;
                      if (!dx_buf.empty())
                        dx_buf[static_cast<std::size_t>(s)] += go * kernel.at(ki * width + d);
                      if (!dk_buf.empty())
                        dk_buf[ki * width + d] += go * x.at(static_cast<std::size_t>(s));
                    }
                  }
                if (!dx_buf.empty()) t.accumulate(x.node(), dx_buf);
                if (!dk_buf.empty()) t.accumulate(kernel.node(), dk_buf);
              });
}

Tensor merge_channels(const Tensor& a) {
  Tape* tape = common_tape("merge_channels", {&a});
  if (a.rank() != 3) {
    throw NumericError("merge_channels: expected rank-3 tensor, got shape " +
                       shape_str(a.shape()));
  }
  const std::size_t c = a.shape()[0], tlen = a.shape()[1], f = a.shape()[2];
  std::vector<double> out(c * tlen * f);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ti = 0; ti < tlen; ++ti)
      for (std::size_t fi = 0; fi < f; ++fi)
        out[ti * (c * f) + ci * f + fi] = a.at((ci * tlen + ti) * f + fi);
  return emit(tape, "merge_channels", {{tlen, c * f}, std::move(out)},
              [a, c, tlen, f](Tape& t, const std::vector<double>& g) {
                if (a.node() < 0) return;
                std::vector<double> da(a.size());
                for (std::size_t ci = 0; ci < c; ++ci)
                  for (std::size_t ti = 0; ti < tlen; ++ti)
                    for (std::size_t fi = 0; fi < f; ++fi)
                      da[(ci * tlen + ti) * f + fi] = g[ti * (c * f) + ci * f + fi];
                t.accumulate(a.node(), da);
              });
}

Tensor reshape(const Tensor& a, Shape shape) {
  Tape* tape = common_tape("reshape", {&a});
  if (shape_numel(shape) != a.size()) {
    throw NumericError("reshape: cannot reshape " + shape_str(a.shape()) + " to " +
                       shape_str(shape));
  }
  std::vector<double> out = a.values();
  return emit(tape, "reshape", {std::move(shape), std::move(out)},
              [a](Tape& t, const std::vector<double>& g) { t.accumulate(a.node(), g); });
}

std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double h) {
  if (h <= 0.0) throw NumericError("finite_diff_grad: step must be positive");
  std::vector<double> grad(x.size());
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    // the floor keeps finite-difference noise on true-zero coordinates from
    // dominating the comparison
    const double denom = std::max({std::abs(got[i]), std::abs(want[i]), 1e-6});
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

}  // namespace mst
