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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "alvtts/error.hpp"
#include "alvtts/nn/tensor.hpp"

namespace alvtts::testing {

using MatD = nn::Matrix<double>;
using VarD = nn::Var<double>;

inline MatD random_matrix(nn::Index rows, nn::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  MatD m(rows, cols);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// Largest relative error between the autograd gradient of `loss` w.r.t. each
/// input and a central finite difference with step `h`.
inline double max_gradient_error(std::vector<VarD> inputs, const std::function<VarD(const std::vector<VarD>&)>& loss,
                                 double h = 1e-5) {
  for (auto& v : inputs) v.zero_grad();
  VarD out = loss(inputs);
  nn::backward(out);
  double worst = 0.0;
  for (auto& v : inputs) {
    if (!v.requires_grad()) continue;
    MatD analytic = v.has_grad() ? v.grad() : MatD::Zero(v.rows(), v.cols());
    for (nn::Index i = 0; i < v.value().size(); ++i) {
      const double saved = v.value().data()[i];
      v.mutable_value().data()[i] = saved + h;
      const double up = loss(inputs).item();
      v.mutable_value().data()[i] = saved - h;
      const double down = loss(inputs).item();
      v.mutable_value().data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::max(std::abs(a), std::abs(numeric)));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

/// Fresh scratch directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("alvtts_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an alvtts::Error";
  return ErrorKind::kConfig;
}

}  // namespace alvtts::testing
