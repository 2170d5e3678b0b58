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

// ALVF feature files: "ALVF" | u32 T | u32 D | T*D float32, row-major, little-endian.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include "alvtts/checkpoint.hpp"
#include "alvtts/error.hpp"
#include "alvtts/nn/tensor.hpp"

namespace alvtts::corpus {

using FrameMatrix = nn::Matrix<float>;

inline std::string encode_feature_file(const FrameMatrix& frames) {
  std::string out = "ALVF";
  const auto t = static_cast<std::uint32_t>(frames.rows());
  const auto d = static_cast<std::uint32_t>(frames.cols());
  out.append(reinterpret_cast<const char*>(&t), sizeof t);
  out.append(reinterpret_cast<const char*>(&d), sizeof d);
  out.append(reinterpret_cast<const char*>(frames.data()), static_cast<std::size_t>(frames.size()) * sizeof(float));
  return out;
}

inline FrameMatrix decode_feature_file(std::string_view bytes, const std::string& origin = "<memory>") {
  require(bytes.size() >= 12, ErrorKind::kFormat, "feature file too short: " + origin);
  require(bytes.substr(0, 4) == "ALVF", ErrorKind::kFormat, "bad feature file magic: " + origin);
  std::uint32_t t = 0, d = 0;
  std::memcpy(&t, bytes.data() + 4, 4);
  std::memcpy(&d, bytes.data() + 8, 4);
  const std::size_t payload = static_cast<std::size_t>(t) * d * sizeof(float);
  require(bytes.size() == 12 + payload, ErrorKind::kFormat,
          "feature file size does not match its T x D header: " + origin);
  FrameMatrix frames(t, d);
  std::memcpy(frames.data(), bytes.data() + 12, payload);
  return frames;
}

inline void write_feature_file(const std::filesystem::path& path, const FrameMatrix& frames) {
  write_file_bytes(path, encode_feature_file(frames));
}

inline FrameMatrix read_feature_file(const std::filesystem::path& path) {
  return decode_feature_file(read_file_bytes(path), path.string());
}

}  // namespace alvtts::corpus
