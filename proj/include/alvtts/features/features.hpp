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
#include <functional>
#include <memory>
#include <vector>

#include "alvtts/corpus/feature_file.hpp"
#include "alvtts/corpus/types.hpp"
#include "alvtts/error.hpp"
#include "alvtts/nn/tensor.hpp"

namespace alvtts::features {

using nn::Index;
using FeatureMatrix = nn::Matrix<double>;

/// Frame-level features. `voicing` is empty for features that carry no voicing
/// decision (e.g. bottleneck features), otherwise one flag per frame.
struct FrameSequence {
  FeatureMatrix frames;
  double frame_rate = 50.0;
  std::vector<bool> voicing;

  Index length() const { return frames.rows(); }
  Index dims() const { return frames.cols(); }

  void validate() const {
    require(frames.rows() >= 1, ErrorKind::kShape, "frame sequence must contain at least one frame");
    require(voicing.empty() || static_cast<Index>(voicing.size()) == frames.rows(), ErrorKind::kShape,
            "voicing flags must cover every frame");
    require(frames.allFinite(), ErrorKind::kNumeric, "frame sequence contains non-finite values");
  }
};

/// One row per phoneme.
using PhonemeFeatureSequence = FeatureMatrix;

/// Utterance-wise z-normalisation of a single-channel F0 contour over its voiced frames.
/// Unvoiced frames are left untouched.
inline FrameSequence normalize_f0(const FrameSequence& contour) {
  require(contour.dims() == 1, ErrorKind::kShape, "normalize_f0 expects a single-channel contour");
  const Index n = contour.length();
  auto voiced = [&](Index t) { return contour.voicing.empty() || contour.voicing[static_cast<std::size_t>(t)]; };
  double sum = 0.0;
  Index count = 0;
  for (Index t = 0; t < n; ++t)
    if (voiced(t)) {
      sum += contour.frames(t, 0);
      ++count;
    }
  require(count >= 2, ErrorKind::kDegenerate, "normalize_f0 needs at least two voiced frames");
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (Index t = 0; t < n; ++t)
    if (voiced(t)) sq += (contour.frames(t, 0) - mean) * (contour.frames(t, 0) - mean);
  const double var = sq / static_cast<double>(count);
  require(var > 1e-12, ErrorKind::kDegenerate, "normalize_f0: voiced frames have zero variance");
  const double inv_std = 1.0 / std::sqrt(var);
  FrameSequence out = contour;
  for (Index t = 0; t < n; ++t)
    if (voiced(t)) out.frames(t, 0) = (contour.frames(t, 0) - mean) * inv_std;
  return out;
}

/// Fills unvoiced frames by linear interpolation between the nearest voiced
/// neighbours; leading and trailing gaps hold the nearest voiced value.
inline FrameSequence interpolate_unvoiced(const FrameSequence& contour) {
  const Index n = contour.length();
  FrameSequence out = contour;
  if (contour.voicing.empty()) return out;
  std::vector<Index> voiced;
  for (Index t = 0; t < n; ++t)
    if (contour.voicing[static_cast<std::size_t>(t)]) voiced.push_back(t);
  require(!voiced.empty(), ErrorKind::kDegenerate, "interpolate_unvoiced needs at least one voiced frame");
  for (Index t = 0; t < voiced.front(); ++t) out.frames.row(t) = contour.frames.row(voiced.front());
  for (Index t = voiced.back() + 1; t < n; ++t) out.frames.row(t) = contour.frames.row(voiced.back());
  for (std::size_t k = 0; k + 1 < voiced.size(); ++k) {
    const Index a = voiced[k];
    const Index b = voiced[k + 1];
    for (Index t = a + 1; t < b; ++t) {
      const double w = static_cast<double>(t - a) / static_cast<double>(b - a);
      out.frames.row(t) = (1.0 - w) * contour.frames.row(a) + w * contour.frames.row(b);
    }
  }
  out.voicing.assign(static_cast<std::size_t>(n), true);
  return out;
}

/// Average pooling of frames over each aligned phoneme span.
inline PhonemeFeatureSequence pool_phoneme_level(const FrameSequence& frames, const corpus::Alignment& alignment) {
  PhonemeFeatureSequence out(static_cast<Index>(alignment.spans.size()), frames.dims());
  for (std::size_t p = 0; p < alignment.spans.size(); ++p) {
    const auto& s = alignment.spans[p];
    require(s.start_frame >= 0 && s.end_frame <= frames.length() && s.start_frame < s.end_frame,
            ErrorKind::kAlignment,
            "span " + std::to_string(p) + " [" + std::to_string(s.start_frame) + ", " + std::to_string(s.end_frame) +
                ") lies outside " + std::to_string(frames.length()) + " frames");
    out.row(static_cast<Index>(p)) = frames.frames.middleRows(s.start_frame, s.frames()).colwise().mean();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Providers

using FrameLoader = std::function<corpus::FrameMatrix(const corpus::Utterance&)>;

/// Source of frame-level prosody features for an utterance. Implementations are
/// deterministic and hold no trainable state.
class ProsodyProvider {
 public:
  virtual ~ProsodyProvider() = default;
  virtual FrameSequence provide(const corpus::Utterance& utterance) const = 0;
  virtual int dimensionality() const = 0;
};

/// Reads log-F0 from `channel` of the utterance's feature file (values <= 0 or
/// non-finite mark unvoiced frames), interpolates the gaps, then z-normalises.
class F0Provider final : public ProsodyProvider {
 public:
  F0Provider(FrameLoader loader, double frame_rate, int channel = 0)
      : loader_(std::move(loader)), frame_rate_(frame_rate), channel_(channel) {}

  FrameSequence provide(const corpus::Utterance& utterance) const override {
    return contour_from_frames(loader_(utterance));
  }

  FrameSequence contour_from_frames(const corpus::FrameMatrix& raw) const {
    require(channel_ < raw.cols(), ErrorKind::kFormat, "feature file has no log-F0 channel " + std::to_string(channel_));
    FrameSequence contour;
    contour.frame_rate = frame_rate_;
    contour.frames = raw.col(channel_).cast<double>();
    contour.voicing.resize(static_cast<std::size_t>(raw.rows()));
    for (Index t = 0; t < raw.rows(); ++t) {
      const double v = contour.frames(t, 0);
      const bool voiced = std::isfinite(v) && v > 0.0;
      contour.voicing[static_cast<std::size_t>(t)] = voiced;
      if (!voiced) contour.frames(t, 0) = 0.0;
    }
    return normalize_f0(interpolate_unvoiced(contour));
  }

  int dimensionality() const override { return 1; }

 private:
  FrameLoader loader_;
  double frame_rate_;
  int channel_;
};

/// Passes precomputed features (e.g. ASR bottleneck activations) through verbatim.
class ExternalFeatureProvider final : public ProsodyProvider {
 public:
  ExternalFeatureProvider(FrameLoader loader, int dims, double frame_rate)
      : loader_(std::move(loader)), dims_(dims), frame_rate_(frame_rate) {}

  FrameSequence provide(const corpus::Utterance& utterance) const override {
    const auto raw = loader_(utterance);
    require(raw.cols() == dims_, ErrorKind::kFormat,
            "feature file for " + utterance.utt_id + " has D=" + std::to_string(raw.cols()) +
                " but the provider expects D=" + std::to_string(dims_));
    FrameSequence out;
    out.frames = raw.cast<double>();
    out.frame_rate = frame_rate_;
    return out;
  }

  int dimensionality() const override { return dims_; }

 private:
  FrameLoader loader_;
  int dims_;
  double frame_rate_;
};

/// Provider output pooled to phoneme level.
inline PhonemeFeatureSequence phoneme_features(const ProsodyProvider& provider, const corpus::Utterance& utterance) {
  FrameSequence frames = provider.provide(utterance);
  frames.validate();
  return pool_phoneme_level(frames, utterance.alignment);
}

}  // namespace alvtts::features
