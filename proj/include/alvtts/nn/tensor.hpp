// Copyright (c) 2026 The alvtts Authors
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

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value is a 2-D matrix; scalars are 1x1. Graph nodes are
// reference counted and released once the last Var pointing at them goes
// out of scope, so a training step builds a fresh graph per batch.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "alvtts/error.hpp"

namespace alvtts::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Matrix<T> value;
  Matrix<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Matrix<T>& grad_buffer() {
    if (grad.size() == 0) grad = Matrix<T>::Zero(value.rows(), value.cols());
    return grad;
  }

  Node& input(std::size_t i) { return *inputs[i]; }
  bool wants(std::size_t i) const { return inputs[i]->requires_grad; }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Matrix<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var scalar(T v) {
    Matrix<T> m(1, 1);
    m(0, 0) = v;
    return Var(std::move(m));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix<T>& value() const { return node_->value; }
  Matrix<T>& mutable_value() { return node_->value; }
  const Matrix<T>& grad() const { return node_->grad; }
  Matrix<T>& mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  T item() const { return node_->value(0, 0); }
  void zero_grad() { node_->grad.resize(0, 0); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T, typename Backward>
Var<T> make_result(Matrix<T> value, std::vector<Var<T>> inputs, Backward&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) node->inputs.push_back(in.shared());
      node->backward = std::forward<Backward>(backward);
    }
  }
  return Var<T>(std::move(node));
}

/// Accumulates d(loss)/d(node) into every node reachable from `loss`.
template <typename T>
void backward(const Var<T>& loss) {
  require(loss.rows() == 1 && loss.cols() == 1, ErrorKind::kShape, "backward needs a scalar loss");
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad_buffer().setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear algebra

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape, "add: shape mismatch");
  return make_result<T>(a.value() + b.value(), {a, b}, [](Node<T>& self) {
    if (self.wants(0)) self.input(0).grad_buffer() += self.grad;
    if (self.wants(1)) self.input(1).grad_buffer() += self.grad;
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape, "sub: shape mismatch");
  return make_result<T>(a.value() - b.value(), {a, b}, [](Node<T>& self) {
    if (self.wants(0)) self.input(0).grad_buffer() += self.grad;
    if (self.wants(1)) self.input(1).grad_buffer() -= self.grad;
  });
}

/// Hadamard product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape, "mul: shape mismatch");
  return make_result<T>(a.value().cwiseProduct(b.value()), {a, b}, [](Node<T>& self) {
    if (self.wants(0)) self.input(0).grad_buffer() += self.grad.cwiseProduct(self.input(1).value);
    if (self.wants(1)) self.input(1).grad_buffer() += self.grad.cwiseProduct(self.input(0).value);
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return make_result<T>(a.value() * s, {a}, [s](Node<T>& self) {
    self.input(0).grad_buffer() += self.grad * s;
  });
}

/// a (n x k) times b (k x m).
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require(a.cols() == b.rows(), ErrorKind::kShape, "matmul: inner dimension mismatch");
  Matrix<T> out = a.value() * b.value();
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.wants(0)) self.input(0).grad_buffer().noalias() += self.grad * self.input(1).value.transpose();
    if (self.wants(1)) self.input(1).grad_buffer().noalias() += self.input(0).value.transpose() * self.grad;
  });
}

/// a (n x k) times b^T where b is (m x k).
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  require(a.cols() == b.cols(), ErrorKind::kShape, "matmul_nt: inner dimension mismatch");
  Matrix<T> out = a.value() * b.value().transpose();
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.wants(0)) self.input(0).grad_buffer().noalias() += self.grad * self.input(1).value;
    if (self.wants(1)) self.input(1).grad_buffer().noalias() += self.grad.transpose() * self.input(0).value;
  });
}

/// Adds a 1 x C row to every row of a.
template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::kShape, "add_row: bias shape mismatch");
  Matrix<T> out = a.value().rowwise() + row.value().row(0);
  return make_result<T>(std::move(out), {a, row}, [](Node<T>& self) {
    if (self.wants(0)) self.input(0).grad_buffer() += self.grad;
    if (self.wants(1)) self.input(1).grad_buffer() += self.grad.colwise().sum();
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return make_result<T>(a.value().cwiseMax(T(0)), {a}, [](Node<T>& self) {
    const auto& x = self.input(0).value;
    self.input(0).grad_buffer() += (x.array() > T(0)).select(self.grad, T(0));
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Matrix<T> out = a.value().array().tanh().matrix();
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    self.input(0).grad_buffer().array() += self.grad.array() * (T(1) - self.value.array().square());
  });
}

/// Forward value is `quantized`; the backward pass copies gradients to `continuous` unchanged.
template <typename T>
Var<T> straight_through(const Var<T>& continuous, const Matrix<T>& quantized) {
  require(continuous.rows() == quantized.rows() && continuous.cols() == quantized.cols(), ErrorKind::kShape,
          "straight_through: shape mismatch");
  return make_result<T>(quantized, {continuous}, [](Node<T>& self) {
    self.input(0).grad_buffer() += self.grad;
  });
}

/// Value copy with no gradient path (stop-gradient).
template <typename T>
Var<T> detach(const Var<T>& a) {
  return Var<T>(a.value());
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Var<T> slice_cols(const Var<T>& a, Index start, Index count) {
  require(start >= 0 && start + count <= a.cols(), ErrorKind::kShape, "slice_cols: out of range");
  Matrix<T> out = a.value().middleCols(start, count);
  return make_result<T>(std::move(out), {a}, [start, count](Node<T>& self) {
    self.input(0).grad_buffer().middleCols(start, count) += self.grad;
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, Index start, Index count) {
  require(start >= 0 && start + count <= a.rows(), ErrorKind::kShape, "slice_rows: out of range");
  Matrix<T> out = a.value().middleRows(start, count);
  return make_result<T>(std::move(out), {a}, [start, count](Node<T>& self) {
    self.input(0).grad_buffer().middleRows(start, count) += self.grad;
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), ErrorKind::kShape, "concat_cols: no inputs");
  Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, ErrorKind::kShape, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix<T> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return make_result<T>(std::move(out), parts, [](Node<T>& self) {
    Index off = 0;
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Index c = self.input(i).value.cols();
      if (self.wants(i)) self.input(i).grad_buffer() += self.grad.middleCols(off, c);
      off += c;
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), ErrorKind::kShape, "concat_rows: no inputs");
  Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, ErrorKind::kShape, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix<T> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return make_result<T>(std::move(out), parts, [](Node<T>& self) {
    Index off = 0;
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Index r = self.input(i).value.rows();
      if (self.wants(i)) self.input(i).grad_buffer() += self.grad.middleRows(off, r);
      off += r;
    }
  });
}

/// Row lookup: out[i] = table[indices[i]].
template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<int>& indices) {
  Matrix<T> out(static_cast<Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < table.rows(), ErrorKind::kVocabulary, "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = table.value().row(indices[i]);
  }
  return make_result<T>(std::move(out), {table}, [indices](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    for (std::size_t i = 0; i < indices.size(); ++i) g.row(indices[i]) += self.grad.row(static_cast<Index>(i));
  });
}

/// Repeats row p counts[p] times, preserving order.
template <typename T>
Var<T> repeat_rows(const Var<T>& a, const std::vector<int>& counts) {
  require(static_cast<Index>(counts.size()) == a.rows(), ErrorKind::kShape, "repeat_rows: one count per row");
  Index total = 0;
  for (int c : counts) {
    require(c >= 1, ErrorKind::kDuration, "repeat_rows: counts must be >= 1");
    total += c;
  }
  Matrix<T> out(total, a.cols());
  Index r = 0;
  for (std::size_t p = 0; p < counts.size(); ++p)
    for (int k = 0; k < counts[p]; ++k) out.row(r++) = a.value().row(static_cast<Index>(p));
  return make_result<T>(std::move(out), {a}, [counts](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    Index row = 0;
    for (std::size_t p = 0; p < counts.size(); ++p)
      for (int k = 0; k < counts[p]; ++k) g.row(static_cast<Index>(p)) += self.grad.row(row++);
  });
}

// ---------------------------------------------------------------------------
// Normalisation and attention helpers

template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
  Matrix<T> out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    T m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    const auto& y = self.value;
    Eigen::Matrix<T, Eigen::Dynamic, 1> dot = (self.grad.cwiseProduct(y)).rowwise().sum();
    Matrix<T> g = self.grad;
    g.colwise() -= dot;
    self.input(0).grad_buffer() += g.cwiseProduct(y);
  });
}

/// Row-wise layer normalisation with learned gain and bias (both 1 x C).
template <typename T>
Var<T> layer_norm(const Var<T>& a, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
  const Index n = a.rows();
  const Index c = a.cols();
  require(gain.cols() == c && bias.cols() == c, ErrorKind::kShape, "layer_norm: parameter width mismatch");
  Matrix<T> xhat(n, c);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
  for (Index r = 0; r < n; ++r) {
    T mean = a.value().row(r).mean();
    auto centered = (a.value().row(r).array() - mean);
    T var = centered.square().mean();
    inv_std(r) = T(1) / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix<T> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  auto saved = std::make_shared<std::pair<Matrix<T>, Eigen::Matrix<T, Eigen::Dynamic, 1>>>(std::move(xhat),
                                                                                          std::move(inv_std));
  return make_result<T>(std::move(out), {a, gain, bias}, [saved](Node<T>& self) {
    const auto& xh = saved->first;
    const auto& istd = saved->second;
    if (self.wants(1)) self.input(1).grad_buffer() += self.grad.cwiseProduct(xh).colwise().sum();
    if (self.wants(2)) self.input(2).grad_buffer() += self.grad.colwise().sum();
    if (self.wants(0)) {
      const T c = static_cast<T>(xh.cols());
      Matrix<T> gx = (self.grad.array().rowwise() * self.input(1).value.row(0).array()).matrix();
      auto& out = self.input(0).grad_buffer();
      for (Index r = 0; r < gx.rows(); ++r) {
        T mean_g = gx.row(r).mean();
        T mean_gx = gx.row(r).dot(xh.row(r)) / c;
        out.row(r).array() += istd(r) * (gx.row(r).array() - mean_g - xh.row(r).array() * mean_gx);
      }
    }
  });
}

/// "Same"-padded 1-D convolution along rows. x: L x Cin, weight: (kernel*Cin) x Cout, bias: 1 x Cout.
/// Row block k of the weight multiplies x[l + k - kernel/2].
template <typename T>
Var<T> conv1d_same(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int kernel) {
  require(kernel >= 1 && kernel % 2 == 1, ErrorKind::kShape, "conv1d_same: kernel must be odd");
  const Index len = x.rows();
  const Index cin = x.cols();
  require(weight.rows() == kernel * cin, ErrorKind::kShape, "conv1d_same: weight rows must be kernel*Cin");
  require(bias.cols() == weight.cols(), ErrorKind::kShape, "conv1d_same: bias width mismatch");
  const Index pad = kernel / 2;
  auto cols = std::make_shared<Matrix<T>>(Matrix<T>::Zero(len, kernel * cin));
  for (Index l = 0; l < len; ++l)
    for (int k = 0; k < kernel; ++k) {
      Index src = l + k - pad;
      if (src >= 0 && src < len) cols->block(l, k * cin, 1, cin) = x.value().row(src);
    }
  Matrix<T> out = (*cols) * weight.value();
  out.rowwise() += bias.value().row(0);
  return make_result<T>(std::move(out), {x, weight, bias}, [cols, kernel, cin, pad](Node<T>& self) {
    if (self.wants(1)) self.input(1).grad_buffer().noalias() += cols->transpose() * self.grad;
    if (self.wants(2)) self.input(2).grad_buffer() += self.grad.colwise().sum();
    if (self.wants(0)) {
      Matrix<T> dcols = self.grad * self.input(1).value.transpose();
      auto& gx = self.input(0).grad_buffer();
      const Index n = gx.rows();
      for (Index l = 0; l < n; ++l)
        for (int k = 0; k < kernel; ++k) {
          Index src = l + k - pad;
          if (src >= 0 && src < n) gx.row(src) += dcols.block(l, k * cin, 1, cin);
        }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses (all return 1 x 1)

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  Matrix<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    self.input(0).grad_buffer().array() += self.grad(0, 0);
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  const T n = static_cast<T>(a.value().size());
  return scale(sum_all(a), T(1) / n);
}

/// Mean over rows of the squared L2 norm of each row.
template <typename T>
Var<T> mean_row_sqnorm(const Var<T>& a) {
  require(a.rows() > 0, ErrorKind::kShape, "mean_row_sqnorm: empty input");
  Matrix<T> out(1, 1);
  const T n = static_cast<T>(a.rows());
  out(0, 0) = a.value().squaredNorm() / n;
  return make_result<T>(std::move(out), {a}, [n](Node<T>& self) {
    self.input(0).grad_buffer() += self.input(0).value * (T(2) * self.grad(0, 0) / n);
  });
}

/// Mean absolute error over all cells.
template <typename T>
Var<T> mae(const Var<T>& pred, const Var<T>& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::kShape, "mae: shape mismatch");
  Matrix<T> diff = pred.value() - target.value();
  const T n = static_cast<T>(diff.size());
  Matrix<T> out(1, 1);
  out(0, 0) = diff.cwiseAbs().sum() / n;
  auto sign = std::make_shared<Matrix<T>>(diff.unaryExpr([](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); }));
  return make_result<T>(std::move(out), {pred, target}, [sign, n](Node<T>& self) {
    const T g = self.grad(0, 0) / n;
    if (self.wants(0)) self.input(0).grad_buffer() += (*sign) * g;
    if (self.wants(1)) self.input(1).grad_buffer() -= (*sign) * g;
  });
}

/// Mean squared error over all cells.
template <typename T>
Var<T> mse(const Var<T>& pred, const Var<T>& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::kShape, "mse: shape mismatch");
  return mean_all(mul(sub(pred, target), sub(pred, target)));
}

/// Mean cross-entropy of softmax(logits[r]) against targets[r] over the listed rows.
/// An empty row list yields 0.
template <typename T>
Var<T> cross_entropy_rows(const Var<T>& logits, const std::vector<int>& rows, const std::vector<int>& targets) {
  require(rows.size() == targets.size(), ErrorKind::kShape, "cross_entropy_rows: rows/targets length mismatch");
  Matrix<T> out = Matrix<T>::Zero(1, 1);
  if (rows.empty()) return Var<T>(std::move(out));
  const Index classes = logits.cols();
  auto probs = std::make_shared<Matrix<T>>(static_cast<Index>(rows.size()), classes);
  T total = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < logits.rows(), ErrorKind::kShape, "cross_entropy_rows: row out of range");
    require(targets[i] >= 0 && targets[i] < classes, ErrorKind::kShape, "cross_entropy_rows: target out of range");
    auto row = logits.value().row(rows[i]);
    T m = row.maxCoeff();
    auto shifted = (row.array() - m);
    T lse = std::log(shifted.exp().sum());
    total += -(shifted(targets[i]) - lse);
    probs->row(static_cast<Index>(i)) = (shifted - lse).exp().matrix();
  }
  const T n = static_cast<T>(rows.size());
  out(0, 0) = total / n;
  return make_result<T>(std::move(out), {logits}, [probs, rows, targets, n](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    const T s = self.grad(0, 0) / n;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto delta = probs->row(static_cast<Index>(i)).eval();
      delta(targets[i]) -= T(1);
      g.row(rows[i]) += delta * s;
    }
  });
}

template <typename T>
Matrix<T> softmax_rows_value(const Matrix<T>& logits) {
  Matrix<T> out = logits;
  for (Index r = 0; r < out.rows(); ++r) {
    T m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace alvtts::nn
