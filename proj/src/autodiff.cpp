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

#include "ews/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "ews/errors.hpp"

namespace ews::ad {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape())
    throw ContractError(std::string(op) + ": operands on different tapes");
}

struct Broadcast {
  std::size_t rows, cols;
  Shape shape;
};

Broadcast broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  const std::size_t ra = a.rows(), ca = a.cols(), rb = b.rows(), cb = b.cols();
  auto pick = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw DimensionError(std::string(op) + ": cannot broadcast " +
                         shape_string(a.shape()) + " with " +
                         shape_string(b.shape()));
  };
  Broadcast out{pick(ra, rb), pick(ca, cb), {}};
  if (a.shape() == b.shape())
    out.shape = a.shape();
  else if (ra == out.rows && ca == out.cols)
    out.shape = a.shape();
  else if (rb == out.rows && cb == out.cols)
    out.shape = b.shape();
  else
    out.shape = {out.rows, out.cols};
  return out;
}

// Sums `g` (rows x cols of the broadcast result) down to the shape of `target`.
void accumulate_reduced(Tensor& target, const Tensor& g, std::size_t rows,
                        std::size_t cols) {
  const std::size_t tr = target.rows(), tc = target.cols();
  if (tr == rows && tc == cols) {
    for (std::size_t i = 0; i < g.size(); ++i) target[i] += g[i];
    return;
  }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      target[(tr == 1 ? 0 : i) * tc + (tc == 1 ? 0 : j)] += g[i * cols + j];
}

// Elementwise binary op with broadcasting. `fwd(x, y)` computes the value;
// `dx(x, y, out)` and `dy(x, y, out)` the partial derivatives.
template <class Fwd, class Dx, class Dy>
Var binary(Var a, Var b, const char* op, Fwd fwd, Dx dx, Dy dy) {
  same_tape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast_shape(av, bv, op);
  const std::size_t ra = av.rows(), ca = av.cols(), rb = bv.rows(),
                    cb = bv.cols();
  Tensor out(bc.shape);
  for (std::size_t i = 0; i < bc.rows; ++i) {
    const std::size_t ia = (ra == 1 ? 0 : i) * ca, ib = (rb == 1 ? 0 : i) * cb;
    for (std::size_t j = 0; j < bc.cols; ++j)
      out[i * bc.cols + j] =
          fwd(av[ia + (ca == 1 ? 0 : j)], bv[ib + (cb == 1 ? 0 : j)]);
  }
  const std::size_t ida = a.id(), idb = b.id();
  return a.tape().push(
      std::move(out), {a, b},
      [ida, idb, bc, dx, dy](Tape& tape, std::size_t self) {
        const Tensor& av = tape.value(ida);
        const Tensor& bv = tape.value(idb);
        const Tensor& ov = tape.value(self);
        const Tensor& g = tape.grad_buffer(self);
        const std::size_t ra = av.rows(), ca = av.cols(), rb = bv.rows(),
                          cb = bv.cols();
        const bool need_a = tape.requires_grad(ida);
        const bool need_b = tape.requires_grad(idb);
        Tensor ga({bc.rows, bc.cols}), gb({bc.rows, bc.cols});
        for (std::size_t i = 0; i < bc.rows; ++i) {
          const std::size_t ia = (ra == 1 ? 0 : i) * ca,
                            ib = (rb == 1 ? 0 : i) * cb;
          for (std::size_t j = 0; j < bc.cols; ++j) {
            const std::size_t k = i * bc.cols + j;
            const double x = av[ia + (ca == 1 ? 0 : j)];
            const double y = bv[ib + (cb == 1 ? 0 : j)];
            if (need_a) ga[k] = g[k] * dx(x, y, ov[k]);
            if (need_b) gb[k] = g[k] * dy(x, y, ov[k]);
          }
        }
        if (need_a) accumulate_reduced(tape.grad_buffer(ida), ga, bc.rows, bc.cols);
        if (need_b) accumulate_reduced(tape.grad_buffer(idb), gb, bc.rows, bc.cols);
      },
      op);
}

// Elementwise unary op; `deriv(x, out)` is the local derivative.
template <class Fwd, class Deriv>
Var unary(Var a, const char* op, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::size_t ida = a.id();
  return a.tape().push(
      std::move(out), {a},
      [ida, deriv](Tape& tape, std::size_t self) {
        const Tensor& av = tape.value(ida);
        const Tensor& ov = tape.value(self);
        const Tensor& g = tape.grad_buffer(self);
        Tensor& ga = tape.grad_buffer(ida);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * deriv(av[i], ov[i]);
      },
      op);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }
Tensor Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value) {
  require_finite(value, "leaf");
  nodes_.push_back({std::move(value), nullptr, record_});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  nodes_.push_back({std::move(value), nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, Backprop fn,
               const char* op) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(fn), op);
}

Var Tape::push(Tensor value, std::span<const Var> parents, Backprop fn,
               const char* op) {
  if (!value.all_finite())
    throw NumericError(std::string(op) + ": non-finite output");
  bool needs = false;
  if (record_)
    for (const Var& p : parents) {
      if (&p.tape() != this)
        throw ContractError(std::string(op) + ": parent on a different tape");
      needs = needs || nodes_[p.id()].requires_grad;
    }
  nodes_.push_back({std::move(value), needs ? std::move(fn) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(nodes_[id].value.shape());
  return g;
}

Tensor Tape::grad(std::size_t id) const {
  if (id < grads_.size() && !grads_[id].empty()) return grads_[id];
  return Tensor(nodes_[id].value.shape());
}

void Tape::backward(Var loss) {
  if (!record_) throw ContractError("backward on a non-recording tape");
  if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
  if (loss.value().size() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_string(loss.shape()));
  grads_.assign(nodes_.size(), Tensor());
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || !n.backprop || grads_[i].empty()) continue;
    n.backprop(*this, i);
  }
}

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Var neg(Var a) { return affine(a, -1.0, 0.0); }
Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double s, double shift) {
  return unary(
      a, "affine", [s, shift](double x) { return s * x + shift; },
      [s](double, double) { return s; });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary(
      a, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = av.data() + i * c;
    double* y = out.data() + i * c;
    const double m = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - m));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  const std::size_t ida = a.id();
  return a.tape().push(
      std::move(out), {a},
      [ida, r, c](Tape& tape, std::size_t self) {
        const Tensor& y = tape.value(self);
        const Tensor& g = tape.grad_buffer(self);
        Tensor& ga = tape.grad_buffer(ida);
        for (std::size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
          for (std::size_t j = 0; j < c; ++j)
            ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
        }
      },
      "softmax_rows");
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.values()) s += v;
  const std::size_t ida = a.id();
  return a.tape().push(
      Tensor::scalar(s), {a},
      [ida](Tape& tape, std::size_t self) {
        const double g = tape.grad_buffer(self)[0];
        for (double& v : tape.grad_buffer(ida).values()) v += g;
      },
      "sum");
}

Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_squares(Var a) {
  const std::size_t ida = a.id();
  return a.tape().push(
      Tensor::scalar(a.value().squared_norm()), {a},
      [ida](Tape& tape, std::size_t self) {
        const double g = tape.grad_buffer(self)[0];
        const Tensor& av = tape.value(ida);
        Tensor& ga = tape.grad_buffer(ida);
        for (std::size_t i = 0; i < av.size(); ++i) ga[i] += 2.0 * g * av[i];
      },
      "sum_squares");
}

Var sum_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out({1, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
  const std::size_t ida = a.id();
  return a.tape().push(
      std::move(out), {a},
      [ida, r, c](Tape& tape, std::size_t self) {
        const Tensor& g = tape.grad_buffer(self);
        Tensor& ga = tape.grad_buffer(ida);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j];
      },
      "sum_rows");
}

Var sum_cols(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out({r, 1});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += av[i * c + j];
  const std::size_t ida = a.id();
  return a.tape().push(
      std::move(out), {a},
      [ida, r, c](Tape& tape, std::size_t self) {
        const Tensor& g = tape.grad_buffer(self);
        Tensor& ga = tape.grad_buffer(ida);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i];
      },
      "sum_cols");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  Tensor out({a.rows(), b.cols()});
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  Tensor out = matmul(a.value(), b.value());
  const std::size_t ida = a.id(), idb = b.id();
  return a.tape().push(
      std::move(out), {a, b},
      [ida, idb](Tape& tape, std::size_t self) {
        const Tensor& g = tape.grad_buffer(self);
        if (tape.requires_grad(ida))
          as_matrix(tape.grad_buffer(ida)).noalias() +=
              as_matrix(g) * as_matrix(tape.value(idb)).transpose();
        if (tape.requires_grad(idb))
          as_matrix(tape.grad_buffer(idb)).noalias() +=
              as_matrix(tape.value(ida)).transpose() * as_matrix(g);
      },
      "matmul");
}

Var matmul_nt(Var a, Var b) {
  same_tape(a, b, "matmul_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols())
    throw DimensionError("matmul_nt: inner dimensions differ, " +
                         shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()) + "^T");
  Tensor out({av.rows(), bv.rows()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv).transpose();
  const std::size_t ida = a.id(), idb = b.id();
  return a.tape().push(
      std::move(out), {a, b},
      [ida, idb](Tape& tape, std::size_t self) {
        const Tensor& g = tape.grad_buffer(self);
        if (tape.requires_grad(ida))
          as_matrix(tape.grad_buffer(ida)).noalias() +=
              as_matrix(g) * as_matrix(tape.value(idb));
        if (tape.requires_grad(idb))
          as_matrix(tape.grad_buffer(idb)).noalias() +=
              as_matrix(g).transpose() * as_matrix(tape.value(ida));
      },
      "matmul_nt");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const std::size_t r = parts[0].value().rows();
  std::size_t c = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (p.value().rows() != r)
      throw DimensionError("concat_cols: row counts differ");
    c += p.value().cols();
  }
  Tensor out({r, c});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t pc = v.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(v.data() + i * pc, pc, out.data() + i * c + off);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += pc;
  }
  return parts[0].tape().push(
      std::move(out), parts,
      [ids, offsets, r, c](Tape& tape, std::size_t self) {
        const Tensor& g = tape.grad_buffer(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!tape.requires_grad(ids[k])) continue;
          Tensor& gp = tape.grad_buffer(ids[k]);
          const std::size_t pc = gp.cols();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              gp[i * pc + j] += g[i * c + offsets[k] + j];
        }
      },
      "concat_cols");
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  if (begin >= end || end > c)
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " +
                         std::to_string(c) + " columns");
  const std::size_t w = end - begin;
  Tensor out({r, w});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(av.data() + i * c + begin, w, out.data() + i * w);
  const std::size_t ida = a.id();
  return a.tape().push(
      std::move(out), {a},
      [ida, r, c, begin, w](Tape& tape, std::size_t self) {
        const Tensor& g = tape.grad_buffer(self);
        Tensor& ga = tape.grad_buffer(ida);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += g[i * w + j];
      },
      "slice_cols");
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ida = a.id();
  return a.tape().push(
      std::move(out), {a},
      [ida](Tape& tape, std::size_t self) {
        const Tensor& g = tape.grad_buffer(self);
        Tensor& ga = tape.grad_buffer(ida);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      },
      "reshape");
}

Tensor softmax(const Tensor& v) {
  require_finite(v, "softmax");
  Tape tape(false);
  return softmax_rows(tape.constant(v)).value();
}

}  // namespace ews::ad
