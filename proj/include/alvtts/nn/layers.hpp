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

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "alvtts/error.hpp"
#include "alvtts/nn/tensor.hpp"

namespace alvtts::nn {

using Rng = std::mt19937_64;

/// Ordered, named collection of trainable parameters. Modules register their
/// tensors here at construction; optimisers and checkpoints walk the list.
template <typename T>
class ParamRegistry {
 public:
  Var<T> add(const std::string& name, Matrix<T> init) {
    require(index_.find(name) == index_.end(), ErrorKind::kConfig, "duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    params_.emplace_back(name, Var<T>(std::move(init), true));
    return params_.back().second;
  }

  /// Registers every parameter of `other` under `prefix` without copying: the
  /// handles share storage, so updates through either registry are visible to both.
  void adopt(const std::string& prefix, const ParamRegistry& other) {
    for (const auto& [name, p] : other.params()) {
      require(index_.find(prefix + name) == index_.end(), ErrorKind::kConfig, "duplicate parameter name: " + prefix + name);
      index_.emplace(prefix + name, params_.size());
      params_.emplace_back(prefix + name, p);
    }
  }

  std::vector<std::pair<std::string, Var<T>>>& params() { return params_; }
  const std::vector<std::pair<std::string, Var<T>>>& params() const { return params_; }

  const Var<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second].second;
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value().size());
    return n;
  }

  std::map<std::string, Matrix<float>> export_float() const {
    std::map<std::string, Matrix<float>> out;
    for (const auto& [name, p] : params_) out.emplace(name, p.value().template cast<float>());
    return out;
  }

  /// Overwrites every registered parameter from `tensors`; all names must be present with matching shapes.
  void import_float(const std::map<std::string, Matrix<float>>& tensors, const std::string& prefix = "") {
    for (auto& [name, p] : params_) {
      auto it = tensors.find(prefix + name);
      require(it != tensors.end(), ErrorKind::kFormat, "checkpoint lacks parameter " + prefix + name);
      require(it->second.rows() == p.rows() && it->second.cols() == p.cols(), ErrorKind::kFormat,
              "checkpoint parameter " + prefix + name + " has the wrong shape");
      p.mutable_value() = it->second.template cast<T>();
    }
  }

  /// Copies values whose names appear in `other` (same shape); returns the number copied.
  std::size_t copy_matching(const ParamRegistry& other) {
    std::size_t copied = 0;
    for (auto& [name, p] : params_) {
      const Var<T>* src = other.find(name);
      if (src && src->rows() == p.rows() && src->cols() == p.cols()) {
        p.mutable_value() = src->value();
        ++copied;
      }
    }
    return copied;
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
Matrix<T> uniform_matrix(Index rows, Index cols, T limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(limit), static_cast<double>(limit));
  Matrix<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

template <typename T>
Matrix<T> xavier_uniform(Index fan_in, Index fan_out, Rng& rng) {
  T limit = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  return uniform_matrix<T>(fan_in, fan_out, limit, rng);
}

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamRegistry<T>& reg, const std::string& name, Index in, Index out, Rng& rng)
      : weight_(reg.add(name + ".weight", xavier_uniform<T>(in, out, rng))),
        bias_(reg.add(name + ".bias", Matrix<T>::Zero(1, out))) {}

  Var<T> operator()(const Var<T>& x) const { return add_row(matmul(x, weight_), bias_); }

  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }

 private:
  Var<T> weight_;
  Var<T> bias_;
};

template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamRegistry<T>& reg, const std::string& name, Index count, Index width, Rng& rng, T init_std = T(0.1))
      : table_(reg.add(name + ".table", [&] {
          std::normal_distribution<double> dist(0.0, static_cast<double>(init_std));
          Matrix<T> m(count, width);
          for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
          return m;
        }())) {}

  Var<T> operator()(const std::vector<int>& ids) const { return gather_rows(table_, ids); }
  Var<T>& table() { return table_; }
  const Var<T>& table() const { return table_; }

 private:
  Var<T> table_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamRegistry<T>& reg, const std::string& name, Index width)
      : gain_(reg.add(name + ".gain", Matrix<T>::Ones(1, width))),
        bias_(reg.add(name + ".bias", Matrix<T>::Zero(1, width))) {}

  Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gain_, bias_); }

 private:
  Var<T> gain_;
  Var<T> bias_;
};

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamRegistry<T>& reg, const std::string& name, Index in, Index out, int kernel, Rng& rng)
      : kernel_(kernel),
        weight_(reg.add(name + ".weight", xavier_uniform<T>(kernel * in, out, rng))),
        bias_(reg.add(name + ".bias", Matrix<T>::Zero(1, out))) {}

  Var<T> operator()(const Var<T>& x) const { return conv1d_same(x, weight_, bias_, kernel_); }

  int kernel() const { return kernel_; }
  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }

 private:
  int kernel_ = 3;
  Var<T> weight_;
  Var<T> bias_;
};

template <typename T>
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParamRegistry<T>& reg, const std::string& name, Index width, int heads, Rng& rng)
      : heads_(heads),
        query_(reg, name + ".query", width, width, rng),
        key_(reg, name + ".key", width, width, rng),
        value_(reg, name + ".value", width, width, rng),
        output_(reg, name + ".output", width, width, rng) {
    require(heads >= 1 && width % heads == 0, ErrorKind::kConfig, "attention width must divide into heads");
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> q = query_(x);
    Var<T> k = key_(x);
    Var<T> v = value_(x);
    const Index head_width = x.cols() / heads_;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_width));
    std::vector<Var<T>> outputs;
    outputs.reserve(static_cast<std::size_t>(heads_));
    for (int h = 0; h < heads_; ++h) {
      Var<T> qh = slice_cols(q, h * head_width, head_width);
      Var<T> kh = slice_cols(k, h * head_width, head_width);
      Var<T> vh = slice_cols(v, h * head_width, head_width);
      Var<T> weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
      outputs.push_back(matmul(weights, vh));
    }
    Var<T> merged = heads_ == 1 ? outputs.front() : concat_cols(outputs);
    return output_(merged);
  }

 private:
  int heads_ = 1;
  Linear<T> query_, key_, value_, output_;
};

/// Post-norm transformer block: self-attention and a position-wise feed-forward
/// layer, each wrapped in a residual connection followed by layer norm.
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParamRegistry<T>& reg, const std::string& name, Index width, int heads, Index ff_width, Rng& rng)
      : attention_(reg, name + ".attn", width, heads, rng),
        norm1_(reg, name + ".norm1", width),
        ff_in_(reg, name + ".ff_in", width, ff_width, rng),
        ff_out_(reg, name + ".ff_out", ff_width, width, rng),
        norm2_(reg, name + ".norm2", width) {}

  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = norm1_(add(x, attention_(x)));
    return norm2_(add(h, ff_out_(relu(ff_in_(h)))));
  }

 private:
  MultiHeadSelfAttention<T> attention_;
  LayerNorm<T> norm1_;
  Linear<T> ff_in_, ff_out_;
  LayerNorm<T> norm2_;
};

/// Fixed sinusoidal position table, rows = positions.
template <typename T>
Matrix<T> sinusoidal_positions(Index length, Index width) {
  Matrix<T> pe(length, width);
  for (Index pos = 0; pos < length; ++pos)
    for (Index i = 0; i < width; ++i) {
      double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

}  // namespace alvtts::nn
