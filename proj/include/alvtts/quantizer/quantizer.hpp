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

// Reference encoder: phoneme-level prosody features -> input projection ->
// two "same"-padded kernel-3 convolutions (ReLU between them) -> vector
// quantisation against a K-entry codebook. The code indices are the accent
// latent variables (ALVs).

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "alvtts/checkpoint.hpp"
#include "alvtts/corpus/types.hpp"
#include "alvtts/error.hpp"
#include "alvtts/features/features.hpp"
#include "alvtts/nn/layers.hpp"

namespace alvtts::quantizer {

using nn::Index;
using nn::Matrix;
using nn::Var;

/// Per-phoneme code indices in {0..K-1}.
using ALVSequence = std::vector<int>;

struct EncoderConfig {
  int input_dim = 1;
  int width = 256;
  int kernel = 3;
  int codebook_size = 4;
  double beta = 4.0;
  double codebook_init = 0.05;
  std::uint64_t seed = 17;

  void validate() const {
    require(input_dim >= 1 && width >= 1, ErrorKind::kConfig, "encoder dimensions must be positive");
    require(kernel == 3, ErrorKind::kConfig, "the reference encoder uses kernel size 3");
    require(codebook_size >= 2, ErrorKind::kConfig, "codebook needs at least two entries");
    require(beta >= 0.0, ErrorKind::kConfig, "commitment weight must be nonnegative");
  }
};

template <typename T>
struct Codebook {
  Var<T> codes;  // K x W
  std::vector<long> usage;

  int size() const { return static_cast<int>(codes.rows()); }
  int width() const { return static_cast<int>(codes.cols()); }
};

template <typename T>
struct QuantizeResult {
  ALVSequence indices;
  Matrix<T> quantized;  // rows are the selected code vectors
};

/// Nearest code per row by squared Euclidean distance; ties go to the lowest index.
template <typename T>
ALVSequence nearest_codes(const Matrix<T>& z_e, const Matrix<T>& codes) {
  require(z_e.cols() == codes.cols(), ErrorKind::kShape, "quantize: code width differs from encoder width");
  require(z_e.allFinite(), ErrorKind::kNumeric, "quantize: non-finite encoder output");
  ALVSequence out(static_cast<std::size_t>(z_e.rows()));
  for (Index p = 0; p < z_e.rows(); ++p) {
    int best = 0;
    T best_d = std::numeric_limits<T>::infinity();
    for (Index k = 0; k < codes.rows(); ++k) {
      const T d = (z_e.row(p) - codes.row(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    out[static_cast<std::size_t>(p)] = best;
  }
  return out;
}

template <typename T>
Matrix<T> lookup_codes(const Matrix<T>& codes, const ALVSequence& indices) {
  Matrix<T> out(static_cast<Index>(indices.size()), codes.cols());
  for (std::size_t p = 0; p < indices.size(); ++p) {
    require(indices[p] >= 0 && indices[p] < codes.rows(), ErrorKind::kVocabulary, "ALV index out of range");
    out.row(static_cast<Index>(p)) = codes.row(indices[p]);
  }
  return out;
}

/// Assigns each row of `z_e` to its nearest code and records usage.
template <typename T>
QuantizeResult<T> quantize(const Matrix<T>& z_e, Codebook<T>& codebook) {
  QuantizeResult<T> r;
  r.indices = nearest_codes(z_e, codebook.codes.value());
  r.quantized = lookup_codes(codebook.codes.value(), r.indices);
  if (codebook.usage.size() != static_cast<std::size_t>(codebook.size()))
    codebook.usage.assign(static_cast<std::size_t>(codebook.size()), 0);
  for (int k : r.indices) ++codebook.usage[static_cast<std::size_t>(k)];
  return r;
}

/// exp(entropy) of the usage distribution; 1 means a single code is used.
inline double codebook_perplexity(const std::vector<long>& usage) {
  double total = 0.0;
  for (long u : usage) total += static_cast<double>(u);
  if (total <= 0.0) return 0.0;
  double entropy = 0.0;
  for (long u : usage)
    if (u > 0) {
      const double p = static_cast<double>(u) / total;
      entropy -= p * std::log(p);
    }
  return std::exp(entropy);
}

struct VQLossParts {
  double codebook_term = 0.0;
  double commitment_term = 0.0;
  double total = 0.0;
  double beta = 4.0;
};

template <typename T>
struct VQLoss {
  Var<T> codebook_term;
  Var<T> commitment_term;
  Var<T> total;
  double beta = 4.0;

  VQLossParts parts() const {
    return {static_cast<double>(codebook_term.item()), static_cast<double>(commitment_term.item()),
            static_cast<double>(total.item()), beta};
  }
};

/// codebook term ||sg[z_e] - z_q||^2 moves only the codes; commitment term
/// ||z_e - sg[z_q]||^2 moves only the encoder. Both are means over positions.
template <typename T>
VQLoss<T> vq_loss(const Var<T>& z_e, const Var<T>& z_q, double beta) {
  require(z_e.rows() == z_q.rows() && z_e.cols() == z_q.cols(), ErrorKind::kShape, "vq_loss: shape mismatch");
  VQLoss<T> loss;
  loss.beta = beta;
  loss.codebook_term = nn::mean_row_sqnorm(nn::sub(nn::detach(z_e), z_q));
  loss.commitment_term = nn::mean_row_sqnorm(nn::sub(z_e, nn::detach(z_q)));
  loss.total = nn::add(loss.codebook_term, nn::scale(loss.commitment_term, static_cast<T>(beta)));
  return loss;
}

/// Gradient rule across the quantisation step: identity.
template <typename T>
Matrix<T> straight_through_backward(const Matrix<T>& grad_out) {
  return grad_out;
}

template <typename T = float>
class ReferenceEncoder {
 public:
  explicit ReferenceEncoder(EncoderConfig config) : config_(config) {
    config_.validate();
    nn::Rng rng(config_.seed);
    projection_ = nn::Linear<T>(params_, "encoder.projection", config_.input_dim, config_.width, rng);
    conv1_ = nn::Conv1d<T>(params_, "encoder.conv1", config_.width, config_.width, config_.kernel, rng);
    conv2_ = nn::Conv1d<T>(params_, "encoder.conv2", config_.width, config_.width, config_.kernel, rng);
    codebook_.codes = params_.add(
        "codebook.codes",
        nn::uniform_matrix<T>(config_.codebook_size, config_.width, static_cast<T>(config_.codebook_init), rng));
    codebook_.usage.assign(static_cast<std::size_t>(config_.codebook_size), 0);
  }

  /// Continuous encoder output z_e, one row per phoneme.
  Var<T> encode(const Matrix<T>& pooled) const {
    require(pooled.rows() >= 1, ErrorKind::kShape, "encode needs at least one phoneme");
    require(pooled.cols() == config_.input_dim, ErrorKind::kShape,
            "encode: expected " + std::to_string(config_.input_dim) + " feature columns, got " +
                std::to_string(pooled.cols()));
    Var<T> h = projection_(Var<T>(pooled));
    h = nn::relu(conv1_(h));
    return conv2_(h);
  }

  /// Pooled features -> ALVs, without recording a graph or touching usage counts.
  ALVSequence assign(const features::PhonemeFeatureSequence& pooled) const {
    nn::NoGradGuard guard;
    Var<T> z_e = encode(pooled.template cast<T>());
    return nearest_codes(z_e.value(), codebook_.codes.value());
  }

  const EncoderConfig& config() const { return config_; }
  Codebook<T>& codebook() { return codebook_; }
  const Codebook<T>& codebook() const { return codebook_; }
  nn::ParamRegistry<T>& params() { return params_; }
  const nn::ParamRegistry<T>& params() const { return params_; }

  Checkpoint to_checkpoint(int provider_dims) const {
    Checkpoint ckpt;
    ckpt.module = "quantizer";
    ckpt.config = {{"input_dim", config_.input_dim}, {"width", config_.width},
                   {"kernel", config_.kernel},       {"codebook_size", config_.codebook_size},
                   {"beta", config_.beta},           {"provider_dims", provider_dims},
                   {"seed", config_.seed},           {"codebook_init", config_.codebook_init}};
    ckpt.tensors = params_.export_float();
    Matrix<float> usage(1, config_.codebook_size);
    for (int k = 0; k < config_.codebook_size; ++k) usage(0, k) = static_cast<float>(codebook_.usage[static_cast<std::size_t>(k)]);
    ckpt.tensors["codebook.usage"] = usage;
    return ckpt;
  }

  static ReferenceEncoder from_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.module == "quantizer", ErrorKind::kFormat, "not a quantizer checkpoint");
    EncoderConfig c;
    c.input_dim = ckpt.config.at("input_dim").get<int>();
    c.width = ckpt.config.at("width").get<int>();
    c.kernel = ckpt.config.at("kernel").get<int>();
    c.codebook_size = ckpt.config.at("codebook_size").get<int>();
    c.beta = ckpt.config.at("beta").get<double>();
    c.seed = ckpt.config.at("seed").get<std::uint64_t>();
    c.codebook_init = ckpt.config.value("codebook_init", 0.05);
    ReferenceEncoder enc(c);
    enc.params_.import_float(ckpt.tensors);
    const auto& usage = ckpt.tensor("codebook.usage");
    for (int k = 0; k < c.codebook_size; ++k) enc.codebook_.usage[static_cast<std::size_t>(k)] = static_cast<long>(usage(0, k));
    return enc;
  }

 private:
  EncoderConfig config_;
  nn::ParamRegistry<T> params_;
  nn::Linear<T> projection_;
  nn::Conv1d<T> conv1_, conv2_;
  Codebook<T> codebook_;
};

/// provider -> phoneme pooling -> encoder -> nearest code.
template <typename T>
ALVSequence extract_alv(const corpus::Utterance& utterance, const features::ProsodyProvider& provider,
                        const ReferenceEncoder<T>& encoder) {
  require(provider.dimensionality() == encoder.config().input_dim, ErrorKind::kShape,
          "provider dimensionality differs from the encoder input width");
  return encoder.assign(features::phoneme_features(provider, utterance));
}

}  // namespace alvtts::quantizer
