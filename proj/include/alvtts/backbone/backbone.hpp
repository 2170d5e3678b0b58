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

// Non-autoregressive acoustic model in the FastSpeech 2 mould. Phoneme
// embeddings plus ALV embeddings plus a speaker embedding feed a transformer
// encoder; a variance adaptor predicts log-durations and phoneme-level pitch;
// the length regulator expands to frames and a transformer decoder emits
// acoustic frames (log-F0 + spectral proxy channels).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "alvtts/checkpoint.hpp"
#include "alvtts/error.hpp"
#include "alvtts/nn/layers.hpp"

namespace alvtts::backbone {

using nn::Index;
using nn::Matrix;
using nn::Var;

struct BackboneConfig {
  int width = 256;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 2;
  int ff_width = 512;
  int variance_width = 256;
  int output_dim = 9;
  int alv_classes = 4;
  std::vector<std::string> phonemes;
  std::vector<std::string> speakers;
  double pitch_mean = 0.0;
  double pitch_std = 1.0;
  std::vector<double> output_mean;  // per output channel; empty = zeros
  std::uint64_t seed = 23;

  void validate() const {
    require(width >= 1 && encoder_layers >= 1 && decoder_layers >= 1 && heads >= 1 && ff_width >= 1 &&
                variance_width >= 1 && output_dim >= 1,
            ErrorKind::kConfig, "backbone sizes must be positive");
    require(width % heads == 0, ErrorKind::kConfig, "backbone width must be divisible by the head count");
    require(alv_classes >= 2, ErrorKind::kConfig, "backbone needs at least two ALV classes");
    require(!phonemes.empty() && !speakers.empty(), ErrorKind::kConfig, "backbone needs phoneme and speaker vocabularies");
    require(pitch_std > 0.0, ErrorKind::kConfig, "pitch_std must be positive");
    require(output_mean.empty() || static_cast<int>(output_mean.size()) == output_dim, ErrorKind::kConfig,
            "output_mean must have output_dim entries");
  }

  nlohmann::json to_json() const {
    return {{"width", width},
            {"encoder_layers", encoder_layers},
            {"decoder_layers", decoder_layers},
            {"heads", heads},
            {"ff_width", ff_width},
            {"variance_width", variance_width},
            {"output_dim", output_dim},
            {"alv_classes", alv_classes},
            {"phonemes", phonemes},
            {"speakers", speakers},
            {"pitch_mean", pitch_mean},
            {"pitch_std", pitch_std},
            {"output_mean", output_mean},
            {"seed", seed}};
  }

  static BackboneConfig from_json(const nlohmann::json& j) {
    BackboneConfig c;
    c.width = j.at("width");
    c.encoder_layers = j.at("encoder_layers");
    c.decoder_layers = j.at("decoder_layers");
    c.heads = j.at("heads");
    c.ff_width = j.at("ff_width");
    c.variance_width = j.at("variance_width");
    c.output_dim = j.at("output_dim");
    c.alv_classes = j.at("alv_classes");
    c.phonemes = j.at("phonemes").get<std::vector<std::string>>();
    c.speakers = j.at("speakers").get<std::vector<std::string>>();
    c.pitch_mean = j.at("pitch_mean");
    c.pitch_std = j.at("pitch_std");
    c.output_mean = j.at("output_mean").get<std::vector<double>>();
    c.seed = j.at("seed");
    return c;
  }
};

enum class Mode { kTeacherForced, kFreeRunning };

/// Row block p repeated durations[p] times.
template <typename T>
Var<T> length_regulate(const Var<T>& encoded, const std::vector<int>& durations) {
  require(static_cast<Index>(durations.size()) == encoded.rows(), ErrorKind::kShape,
          "length_regulate: one duration per phoneme required");
  for (int d : durations) require(d >= 1, ErrorKind::kDuration, "durations must be >= 1, got " + std::to_string(d));
  return nn::repeat_rows(encoded, durations);
}

template <typename T>
struct BackboneOutput {
  Var<T> frames;         // T x output_dim
  Var<T> log_durations;  // P x 1
  Var<T> pitch;          // P x 1, log-Hz
  std::vector<int> durations;  // realised durations used for expansion
};

template <typename T>
struct TTSLoss {
  Var<T> acoustic;  // MAE on frames
  Var<T> duration;  // MSE on log-durations
  Var<T> pitch;     // MSE on phoneme pitch
  Var<T> total;
};

/// Acoustic MAE + log-duration MSE + pitch MSE, unweighted.
template <typename T>
TTSLoss<T> tts_loss(const Var<T>& pred_frames, const Var<T>& target_frames, const Var<T>& pred_log_durations,
                    const std::vector<int>& true_durations, const Var<T>& pred_pitch, const Var<T>& true_pitch) {
  require(pred_frames.rows() == target_frames.rows() && pred_frames.cols() == target_frames.cols(), ErrorKind::kShape,
          "tts_loss: predicted and target frames differ in shape");
  require(pred_log_durations.rows() == static_cast<Index>(true_durations.size()) && pred_log_durations.cols() == 1,
          ErrorKind::kShape, "tts_loss: duration shape mismatch");
  require(pred_pitch.rows() == true_pitch.rows() && pred_pitch.cols() == true_pitch.cols(), ErrorKind::kShape,
          "tts_loss: pitch shape mismatch");
  Matrix<T> log_d(static_cast<Index>(true_durations.size()), 1);
  for (std::size_t p = 0; p < true_durations.size(); ++p) {
    require(true_durations[p] >= 1, ErrorKind::kDuration, "tts_loss: true durations must be >= 1");
    log_d(static_cast<Index>(p), 0) = std::log(static_cast<T>(true_durations[p]));
  }
  TTSLoss<T> loss;
  loss.acoustic = nn::mae(pred_frames, target_frames);
  loss.duration = nn::mse(pred_log_durations, Var<T>(std::move(log_d)));
  loss.pitch = nn::mse(pred_pitch, true_pitch);
  loss.total = nn::add(nn::add(loss.acoustic, loss.duration), loss.pitch);
  return loss;
}

/// Conv -> ReLU -> LayerNorm, twice, then a scalar projection per position.
template <typename T>
class VariancePredictor {
 public:
  VariancePredictor() = default;
  VariancePredictor(nn::ParamRegistry<T>& reg, const std::string& name, Index width, Index hidden, nn::Rng& rng)
      : conv1_(reg, name + ".conv1", width, hidden, 3, rng),
        norm1_(reg, name + ".norm1", hidden),
        conv2_(reg, name + ".conv2", hidden, hidden, 3, rng),
        norm2_(reg, name + ".norm2", hidden),
        out_(reg, name + ".out", hidden, 1, rng) {}

  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = norm1_(nn::relu(conv1_(x)));
    h = norm2_(nn::relu(conv2_(h)));
    return out_(h);
  }

 private:
  nn::Conv1d<T> conv1_;
  nn::LayerNorm<T> norm1_;
  nn::Conv1d<T> conv2_;
  nn::LayerNorm<T> norm2_;
  nn::Linear<T> out_;
};

template <typename T = float>
class Backbone {
 public:
  explicit Backbone(BackboneConfig config) : config_(std::move(config)) {
    config_.validate();
    for (std::size_t i = 0; i < config_.phonemes.size(); ++i) phoneme_ids_[config_.phonemes[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < config_.speakers.size(); ++i) speaker_ids_[config_.speakers[i]] = static_cast<int>(i);
    nn::Rng rng(config_.seed);
    const Index w = config_.width;
    phoneme_embedding_ = nn::Embedding<T>(params_, "phoneme_embedding", static_cast<Index>(config_.phonemes.size()), w, rng);
    speaker_embedding_ = nn::Embedding<T>(params_, "speaker_embedding", static_cast<Index>(config_.speakers.size()), w, rng);
    for (int l = 0; l < config_.encoder_layers; ++l)
      encoder_.emplace_back(params_, "encoder." + std::to_string(l), w, config_.heads, config_.ff_width, rng);
    duration_predictor_ = VariancePredictor<T>(params_, "duration_predictor", w, config_.variance_width, rng);
    pitch_predictor_ = VariancePredictor<T>(params_, "pitch_predictor", w, config_.variance_width, rng);
    pitch_embedding_ = nn::Linear<T>(params_, "pitch_embedding", 1, w, rng);
    for (int l = 0; l < config_.decoder_layers; ++l)
      decoder_.emplace_back(params_, "decoder." + std::to_string(l), w, config_.heads, config_.ff_width, rng);
    output_ = nn::Linear<T>(params_, "output", w, config_.output_dim, rng);
    alv_table_ = Matrix<T>::Zero(config_.alv_classes, w);
    output_mean_ = Matrix<T>::Zero(1, config_.output_dim);
    position_table_ = nn::sinusoidal_positions<T>(kPositionTableLength, w);
    for (std::size_t d = 0; d < config_.output_mean.size(); ++d) output_mean_(0, static_cast<Index>(d)) = static_cast<T>(config_.output_mean[d]);
  }

  const BackboneConfig& config() const { return config_; }
  nn::ParamRegistry<T>& params() { return params_; }
  const nn::ParamRegistry<T>& params() const { return params_; }

  int phoneme_id(const std::string& p) const {
    auto it = phoneme_ids_.find(p);
    require(it != phoneme_ids_.end(), ErrorKind::kVocabulary, "unknown phoneme '" + p + "'");
    return it->second;
  }

  std::vector<int> phoneme_ids(const std::vector<std::string>& phonemes) const {
    std::vector<int> ids;
    ids.reserve(phonemes.size());
    for (const auto& p : phonemes) ids.push_back(phoneme_id(p));
    return ids;
  }

  int speaker_id(const std::string& s) const {
    auto it = speaker_ids_.find(s);
    require(it != speaker_ids_.end(), ErrorKind::kVocabulary, "unknown speaker '" + s + "'");
    return it->second;
  }

  /// ALV embedding table (K x W). After joint training this holds the quantiser codebook.
  const Matrix<T>& alv_table() const { return alv_table_; }
  void set_alv_table(const Matrix<T>& table) {
    require(table.rows() == config_.alv_classes && table.cols() == config_.width, ErrorKind::kShape,
            "ALV table must be K x W");
    alv_table_ = table;
  }

  /// Phoneme embedding plus ALV embedding rows (elementwise sum).
  Var<T> embed_inputs(const std::vector<int>& phoneme_ids, const Var<T>& alv_rows) const {
    require(alv_rows.rows() == static_cast<Index>(phoneme_ids.size()) && alv_rows.cols() == config_.width,
            ErrorKind::kShape, "embed_inputs: need one W-wide ALV row per phoneme");
    return nn::add(phoneme_embedding_(phoneme_ids), alv_rows);
  }

  Var<T> embed_inputs(const std::vector<int>& phoneme_ids, const std::vector<int>& alvs) const {
    require(alvs.size() == phoneme_ids.size(), ErrorKind::kShape,
            "embed_inputs: " + std::to_string(alvs.size()) + " ALVs for " + std::to_string(phoneme_ids.size()) +
                " phonemes");
    Matrix<T> rows(static_cast<Index>(alvs.size()), config_.width);
    for (std::size_t p = 0; p < alvs.size(); ++p) {
      require(alvs[p] >= 0 && alvs[p] < config_.alv_classes, ErrorKind::kVocabulary, "ALV index out of range");
      rows.row(static_cast<Index>(p)) = alv_table_.row(alvs[p]);
    }
    return embed_inputs(phoneme_ids, Var<T>(std::move(rows)));
  }

  /// Runs the model. `alv_rows` may be undefined for the no-ALV path. Teacher
  /// forcing needs `true_durations` and `true_pitch` (P x 1, log-Hz).
  BackboneOutput<T> forward(const std::vector<int>& phoneme_ids, int speaker, const Var<T>& alv_rows, Mode mode,
                            const std::vector<int>& true_durations = {}, const Matrix<T>& true_pitch = {}) const {
    const auto n = static_cast<Index>(phoneme_ids.size());
    require(n >= 1, ErrorKind::kShape, "forward needs at least one phoneme");
    require(speaker >= 0 && speaker < static_cast<int>(config_.speakers.size()), ErrorKind::kVocabulary,
            "speaker index out of range");
    Var<T> x = alv_rows.defined() ? embed_inputs(phoneme_ids, alv_rows) : phoneme_embedding_(phoneme_ids);
    std::vector<int> spk(static_cast<std::size_t>(n), speaker);
    x = nn::add(x, speaker_embedding_(spk));
    x = nn::add(x, Var<T>(positions(n)));
    for (const auto& block : encoder_) x = block(x);

    BackboneOutput<T> out;
    out.log_durations = duration_predictor_(x);
    out.pitch = nn::add_row(nn::scale(pitch_predictor_(x), static_cast<T>(config_.pitch_std)),
                            Var<T>(Matrix<T>::Constant(1, 1, static_cast<T>(config_.pitch_mean))));

    Matrix<T> pitch_in;
    if (mode == Mode::kTeacherForced) {
      require(static_cast<Index>(true_durations.size()) == n, ErrorKind::kShape,
              "teacher forcing needs one ground-truth duration per phoneme");
      require(true_pitch.rows() == n && true_pitch.cols() == 1, ErrorKind::kShape,
              "teacher forcing needs one ground-truth pitch value per phoneme");
      out.durations = true_durations;
      pitch_in = true_pitch;
    } else {
      out.durations.resize(static_cast<std::size_t>(n));
      for (Index p = 0; p < n; ++p)
        out.durations[static_cast<std::size_t>(p)] =
            std::max(1, static_cast<int>(std::lround(std::exp(static_cast<double>(out.log_durations.value()(p, 0))))));
      pitch_in = out.pitch.value();
    }
    pitch_in.array() = (pitch_in.array() - static_cast<T>(config_.pitch_mean)) / static_cast<T>(config_.pitch_std);
    Var<T> h = nn::add(x, pitch_embedding_(Var<T>(pitch_in)));

    Var<T> frames = length_regulate(h, out.durations);
    frames = nn::add(frames, Var<T>(positions(frames.rows())));
    for (const auto& block : decoder_) frames = block(frames);
    out.frames = nn::add_row(output_(frames), Var<T>(output_mean_));
    return out;
  }

  /// Inference convenience: ALV indices (or none) -> outputs, no graph recorded.
  BackboneOutput<T> synthesize(const std::vector<std::string>& phonemes, const std::string& speaker,
                               const std::vector<int>* alvs) const {
    nn::NoGradGuard guard;
    const auto ids = phoneme_ids(phonemes);
    Var<T> rows;
    if (alvs) {
      require(alvs->size() == phonemes.size(), ErrorKind::kShape, "one ALV per phoneme required");
      rows = Var<T>(alv_rows(*alvs));
    }
    return forward(ids, speaker_id(speaker), rows, Mode::kFreeRunning);
  }

  Matrix<T> alv_rows(const std::vector<int>& alvs) const {
    Matrix<T> rows(static_cast<Index>(alvs.size()), config_.width);
    for (std::size_t p = 0; p < alvs.size(); ++p) {
      require(alvs[p] >= 0 && alvs[p] < config_.alv_classes, ErrorKind::kVocabulary, "ALV index out of range");
      rows.row(static_cast<Index>(p)) = alv_table_.row(alvs[p]);
    }
    return rows;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.module = "backbone";
    ckpt.config = config_.to_json();
    ckpt.tensors = params_.export_float();
    ckpt.tensors["alv_table"] = alv_table_.template cast<float>();
    return ckpt;
  }

  static Backbone from_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.module == "backbone", ErrorKind::kFormat, "not a backbone checkpoint");
    Backbone b(BackboneConfig::from_json(ckpt.config));
    b.params_.import_float(ckpt.tensors);
    b.set_alv_table(ckpt.tensor("alv_table").template cast<T>());
    return b;
  }

 private:
  static constexpr Index kPositionTableLength = 2048;

  Matrix<T> positions(Index n) const {
    if (n <= position_table_.rows()) return position_table_.topRows(n);
    return nn::sinusoidal_positions<T>(n, config_.width);
  }

  BackboneConfig config_;
  std::map<std::string, int> phoneme_ids_;
  std::map<std::string, int> speaker_ids_;
  nn::ParamRegistry<T> params_;
  nn::Embedding<T> phoneme_embedding_;
  nn::Embedding<T> speaker_embedding_;
  std::vector<nn::TransformerBlock<T>> encoder_;
  VariancePredictor<T> duration_predictor_;
  VariancePredictor<T> pitch_predictor_;
  nn::Linear<T> pitch_embedding_;
  std::vector<nn::TransformerBlock<T>> decoder_;
  nn::Linear<T> output_;
  Matrix<T> alv_table_;
  Matrix<T> output_mean_;
  Matrix<T> position_table_;
};

/// Phoneme-level pitch target: mean log-F0 (channel 0) over each aligned span.
template <typename T>
Matrix<T> phoneme_pitch(const Matrix<T>& frames, const std::vector<int>& durations) {
  Matrix<T> out(static_cast<Index>(durations.size()), 1);
  Index t = 0;
  for (std::size_t p = 0; p < durations.size(); ++p) {
    out(static_cast<Index>(p), 0) = frames.col(0).segment(t, durations[p]).mean();
    t += durations[p];
  }
  return out;
}

}  // namespace alvtts::backbone
