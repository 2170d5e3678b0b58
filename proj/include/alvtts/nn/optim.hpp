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

#include <algorithm>
#include <cmath>
#include <vector>

#include "alvtts/error.hpp"
#include "alvtts/nn/layers.hpp"

namespace alvtts::nn {

/// Linear warm-up followed by linear decay to zero at `total_steps`:
/// lr(s) = peak * min(s / warmup, 1 - (s - warmup) / (total - warmup)), clipped at 0.
/// Steps count from 1.
struct LinearWarmupSchedule {
  double peak_lr = 1e-3;
  long warmup_steps = 4000;
  long total_steps = 100000;

  double operator()(long step) const {
    double up = warmup_steps > 0 ? static_cast<double>(step) / static_cast<double>(warmup_steps) : 1.0;
    double down = 1.0;
    if (total_steps > warmup_steps)
      down = 1.0 - static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return peak_lr * std::max(0.0, std::min(up, down));
  }
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double clip_norm = 1.0;  // <= 0 disables global-norm clipping
};

template <typename T>
class Adam {
 public:
  explicit Adam(ParamRegistry<T>& params, AdamOptions options = {}) : params_(&params), options_(options) {
    for (auto& [name, p] : params.params()) {
      first_.push_back(Matrix<T>::Zero(p.rows(), p.cols()));
      second_.push_back(Matrix<T>::Zero(p.rows(), p.cols()));
    }
  }

  /// Global L2 norm of all accumulated gradients (parameters without gradients count as zero).
  double grad_norm() const {
    double sq = 0.0;
    for (const auto& [name, p] : params_->params())
      if (p.has_grad()) sq += static_cast<double>(p.grad().squaredNorm());
    return std::sqrt(sq);
  }

  /// Applies one update with learning rate `lr` and clears gradients. Returns the pre-clip gradient norm.
  double step(double lr) {
    const double norm = grad_norm();
    require(std::isfinite(norm), ErrorKind::kNumeric, "non-finite gradient norm");
    const double clip = (options_.clip_norm > 0 && norm > options_.clip_norm) ? options_.clip_norm / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(options_.beta1);
    const T b2 = static_cast<T>(options_.beta2);
    const T step_size = static_cast<T>(lr * std::sqrt(bc2) / bc1);
    const T eps = static_cast<T>(options_.epsilon);
    auto& params = params_->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].second;
      if (!p.has_grad()) continue;
      Matrix<T> g = p.grad() * static_cast<T>(clip);
      first_[i] = b1 * first_[i] + (T(1) - b1) * g;
      second_[i] = b2 * second_[i] + (T(1) - b2) * g.cwiseProduct(g);
      p.mutable_value().array() -= step_size * first_[i].array() / (second_[i].array().sqrt() + eps);
    }
    params_->zero_grad();
    return norm;
  }

  long steps_taken() const { return t_; }

 private:
  ParamRegistry<T>* params_;
  AdamOptions options_;
  std::vector<Matrix<T>> first_;
  std::vector<Matrix<T>> second_;
  long t_ = 0;
};

}  // namespace alvtts::nn
