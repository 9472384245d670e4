// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mst/common.hpp"

namespace mst {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorData {
  Shape shape;
  std::vector<double> values;
};

class Tape;

// Value handle. Holds shared storage and, when produced by an op on a tape,
// the id of its tape node. Detached tensors (no tape) act as constants.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t size() const { return data_->values.size(); }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  const std::vector<double>& values() const { return data_->values; }
  double value() const;  // size() == 1 only
  double at(std::size_t i) const { return data_->values[i]; }

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  const std::shared_ptr<TensorData>& storage() const { return data_; }

 private:
  friend class Tape;
  std::shared_ptr<TensorData> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Records one forward pass; rebuilt per training/decoding step. Nodes are
// appended in evaluation order, so inputs always precede their consumers and
// one reverse sweep visits every node exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf bound to external storage (a model parameter); gradients accumulate
  // against its node id.
  Tensor leaf(const std::shared_ptr<TensorData>& storage);

  // Registers an op output. `out` must already hold the forward value; every
  // entry is checked finite and a NumericError names the op otherwise.
  Tensor record(const char* op, TensorData out, BackwardFn backward);

  void backward(const Tensor& root);

  // Gradient from the last backward(); zeros when the tensor was unreachable.
  std::vector<double> grad(const Tensor& t) const;

  void accumulate(int node, const std::vector<double>& g);
  void accumulate_scaled(int node, const std::vector<double>& g, double scale);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op;
    std::size_t numel;
    std::vector<double> grad;  // sized on first accumulate
    BackwardFn backward;       // empty for leaves
  };
  std::vector<Node> nodes_;
};

// Throws NumericError naming `op` if any value is NaN/Inf.
void check_finite(const char* op, const std::vector<double>& values);

// ---- op set -------------------------------------------------------------
// Shape contracts are documented per op; violations throw NumericError
// naming the op and both shapes.

// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);
// equal shapes, any rank; or rank-2 a:(m,n) with b:(1,n) broadcast over rows
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// constant scalar variants
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
// rank-2 tensors stacked along axis 0 (rows) or 1 (columns)
Tensor concat(const std::vector<Tensor>& parts, int axis);
// rank-2 contiguous [begin, end) along axis
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
Tensor transpose(const Tensor& a);
// elementwise, any rank
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
// rank-2, normalized along each row
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
// any rank -> shape {1}
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// (m,n) -> (m,1)
Tensor row_sums(const Tensor& a);
// (m,n), indices.size()==m -> (m,1) picking a[i, indices[i]]
Tensor pick_cols(const Tensor& a, const std::vector<std::size_t>& indices);
// (v,n) -> (k,n) gathering rows; duplicate indices accumulate gradient
Tensor select_rows(const Tensor& a, const std::vector<std::size_t>& indices);
// (c,h,w) -> (c,ceil(h/2),ceil(w/2)), 2x2 window, stride 2, partial windows kept
Tensor max_pool2d(const Tensor& a);
// x:(cin,h,w), kernel:(cout,cin,3,3), bias:(cout) -> (cout,h,w), zero padded
Tensor conv2d_3x3(const Tensor& x, const Tensor& kernel, const Tensor& bias);
// x:(t,1), kernel:(k,width) with odd width -> (t,k), zero padded
Tensor conv1d_same(const Tensor& x, const Tensor& kernel);
// (c,t,f) -> (t, c*f), channel-major feature layout per frame
Tensor merge_channels(const Tensor& a);
// same numel, new shape
Tensor reshape(const Tensor& a, Shape shape);

// Central differences (f(x+h*e_i) - f(x-h*e_i)) / 2h per coordinate.
std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double h = 1e-5);

double max_rel_err(const std::vector<double>& got,
                   const std::vector<double>& want);

}  // namespace mst
