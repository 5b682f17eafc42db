// Copyright 2026 The EWS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive operation in creation order, which is a
// topological order of the computation graph. backward() walks that order in
// reverse, visiting each node once and accumulating vector-Jacobian products
// into its parents. Every op checks its output for NaN/Inf and throws
// NumericError instead of propagating it.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ews/tensor.hpp"

namespace ews::ad {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tensor grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Accumulates the vector-Jacobian product of node `self` into its parents.
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  // A non-recording tape evaluates values only; backward() is unavailable.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  // Appends an op node. `fn` is dropped when no parent needs a gradient.
  Var push(Tensor value, std::initializer_list<Var> parents, Backprop fn,
           const char* op);
  Var push(Tensor value, std::span<const Var> parents, Backprop fn,
           const char* op);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer for `id`, zero-initialised on first access during
  // backward(). Backprop functions add into it.
  Tensor& grad_buffer(std::size_t id);
  // Gradient of the last backward() loss w.r.t. node `id`; zeros when the
  // node was not reached.
  Tensor grad(std::size_t id) const;

  // Reverse sweep from a scalar loss. Throws ContractError for a non-scalar
  // loss or a non-recording tape.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Backprop backprop;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool record_;
};

// Elementwise binary ops broadcast matrix-style: each of rows/cols must match
// or be 1 on one side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double s);
// s * a + shift
Var affine(Var a, double s, double shift);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
// Gradient passes only where lo < a < hi.
Var clamp(Var a, double lo, double hi);

// Softmax along the last dimension of every row, max-subtracted.
Var softmax_rows(Var a);

Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);
// Column sums: m x n -> 1 x n.
Var sum_rows(Var a);
// Row sums: m x n -> m x 1.
Var sum_cols(Var a);

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator+(Var a, double s) { return affine(a, 1.0, s); }
inline Var operator-(double s, Var a) { return affine(a, -1.0, s); }

// Plain-tensor softmax used outside the tape (explanations, tests).
Tensor softmax(const Tensor& v);
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace ews::ad
