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

// Deterministic sinusoidal renderer for audible demos: frame log-F0 drives a
// harmonic oscillator whose partial amplitudes follow the spectral proxy
// channels. Output is 16-bit mono PCM WAV.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "alvtts/checkpoint.hpp"
#include "alvtts/nn/tensor.hpp"

namespace alvtts::backbone {

inline std::vector<std::int16_t> render_sinusoidal(const nn::Matrix<float>& frames, double frame_rate,
                                                   int sample_rate = 16000) {
  const int hop = std::max(1, static_cast<int>(std::lround(sample_rate / frame_rate)));
  const int partials = std::max<int>(1, static_cast<int>(frames.cols()) - 1);
  std::vector<double> samples(static_cast<std::size_t>(frames.rows()) * hop, 0.0);
  double phase = 0.0;
  for (nn::Index t = 0; t < frames.rows(); ++t) {
    const double f0 = std::clamp(std::exp(static_cast<double>(frames(t, 0))), 40.0, 1000.0);
    std::vector<double> amp(static_cast<std::size_t>(partials), 1.0);
    for (int k = 0; k < partials && k + 1 < frames.cols(); ++k)
      amp[static_cast<std::size_t>(k)] = 1.0 / (1.0 + std::exp(-static_cast<double>(frames(t, k + 1))));
    for (int i = 0; i < hop; ++i) {
      phase += 2.0 * std::numbers::pi * f0 / sample_rate;
      double v = 0.0;
      for (int k = 0; k < partials; ++k)
        if (f0 * (k + 1) < sample_rate / 2.0) v += amp[static_cast<std::size_t>(k)] * std::sin((k + 1) * phase) / (k + 1);
      samples[static_cast<std::size_t>(t * hop + i)] = v;
    }
  }
  double peak = 1e-9;
  for (double v : samples) peak = std::max(peak, std::abs(v));
  std::vector<std::int16_t> pcm(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    pcm[i] = static_cast<std::int16_t>(std::lround(samples[i] / peak * 0.8 * 32767.0));
  return pcm;
}

inline std::string encode_wav(const std::vector<std::int16_t>& pcm, int sample_rate = 16000) {
  std::string out;
  auto put32 = [&out](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&out](std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); };
  const auto data_bytes = static_cast<std::uint32_t>(pcm.size() * sizeof(std::int16_t));
  out += "RIFF";
  put32(36 + data_bytes);
  out += "WAVEfmt ";
  put32(16);
  put16(1);  // PCM
  put16(1);  // mono
  put32(static_cast<std::uint32_t>(sample_rate));
  put32(static_cast<std::uint32_t>(sample_rate) * 2);
  put16(2);
  put16(16);
  out += "data";
  put32(data_bytes);
  out.append(reinterpret_cast<const char*>(pcm.data()), data_bytes);
  return out;
}

inline void write_wav(const std::filesystem::path& path, const nn::Matrix<float>& frames, double frame_rate) {
  write_file_bytes(path, encode_wav(render_sinusoidal(frames, frame_rate)));
}

}  // namespace alvtts::backbone
