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

// Versioned binary checkpoint container:
//   "ALVC" | u32 format version | u64 header length | JSON header | float32 tensor data
// The header lists module id, configuration, upstream checkpoint hashes and a
// tensor directory; tensors follow in directory order, row-major, little-endian.

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "alvtts/error.hpp"
#include "alvtts/nn/tensor.hpp"

namespace alvtts {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr);
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "short write to " + path.string());
}

inline std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file_bytes(path)); }

struct Checkpoint {
  std::string module;
  std::uint32_t format_version = kCheckpointFormatVersion;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> upstream;  // role -> content hash
  std::map<std::string, nn::Matrix<float>> tensors;

  std::string config_hash() const { return sha256_hex(config.dump()); }

  const nn::Matrix<float>& tensor(const std::string& name) const {
    auto it = tensors.find(name);
    require(it != tensors.end(), ErrorKind::kFormat, module + " checkpoint lacks tensor " + name);
    return it->second;
  }
};

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["module"] = ckpt.module;
  header["format_version"] = ckpt.format_version;
  header["config"] = ckpt.config;
  header["config_hash"] = ckpt.config_hash();
  header["upstream"] = ckpt.upstream;
  nlohmann::json directory = nlohmann::json::array();
  for (const auto& [name, m] : ckpt.tensors) directory.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  header["tensors"] = directory;
  const std::string text = header.dump();

  std::string out = "ALVC";
  auto put = [&out](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
  const std::uint32_t version = ckpt.format_version;
  const std::uint64_t length = text.size();
  put(&version, sizeof version);
  put(&length, sizeof length);
  out += text;
  for (const auto& [name, m] : ckpt.tensors) put(m.data(), static_cast<std::size_t>(m.size()) * sizeof(float));
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view bytes, const std::string& origin = "<memory>") {
  auto need = [&](std::size_t offset, std::size_t n) {
    require(offset + n <= bytes.size(), ErrorKind::kFormat, "truncated checkpoint " + origin);
  };
  need(0, 16);
  require(bytes.substr(0, 4) == "ALVC", ErrorKind::kFormat, "bad checkpoint magic in " + origin);
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  std::memcpy(&version, bytes.data() + 4, sizeof version);
  std::memcpy(&length, bytes.data() + 8, sizeof length);
  require(version == kCheckpointFormatVersion, ErrorKind::kFormat,
          "unsupported checkpoint format version " + std::to_string(version) + " in " + origin);
  need(16, length);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, length));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "corrupt checkpoint header in " + origin + ": " + e.what());
  }
  Checkpoint ckpt;
  ckpt.module = header.at("module").get<std::string>();
  ckpt.format_version = version;
  ckpt.config = header.at("config");
  ckpt.upstream = header.at("upstream").get<std::map<std::string, std::string>>();
  std::size_t offset = 16 + length;
  for (const auto& entry : header.at("tensors")) {
    const auto rows = entry.at("rows").get<nn::Index>();
    const auto cols = entry.at("cols").get<nn::Index>();
    const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(float);
    need(offset, n);
    nn::Matrix<float> m(rows, cols);
    std::memcpy(m.data(), bytes.data() + offset, n);
    offset += n;
    ckpt.tensors.emplace(entry.at("name").get<std::string>(), std::move(m));
  }
  require(offset == bytes.size(), ErrorKind::kFormat, "trailing bytes in checkpoint " + origin);
  return ckpt;
}

inline std::string checkpoint_hash(const Checkpoint& ckpt) { return sha256_hex(serialize_checkpoint(ckpt)); }

/// Writes the checkpoint and returns its content hash.
inline std::string save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  write_file_bytes(path, bytes);
  return sha256_hex(bytes);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_module = "") {
  require(std::filesystem::exists(path), ErrorKind::kConfig, "missing checkpoint " + path.string());
  Checkpoint ckpt = parse_checkpoint(read_file_bytes(path), path.string());
  if (!expected_module.empty())
    require(ckpt.module == expected_module, ErrorKind::kFormat,
            path.string() + " holds a '" + ckpt.module + "' checkpoint, expected '" + expected_module + "'");
  return ckpt;
}

/// Fails loudly unless `ckpt` was trained against the upstream checkpoint with hash `actual`.
inline void verify_upstream(const Checkpoint& ckpt, const std::string& role, const std::string& actual) {
  auto it = ckpt.upstream.find(role);
  require(it != ckpt.upstream.end(), ErrorKind::kContract, ckpt.module + " checkpoint records no " + role + " hash");
  require(it->second == actual, ErrorKind::kContract,
          ckpt.module + " checkpoint was trained against " + role + " " + it->second.substr(0, 12) +
              " but the supplied " + role + " hashes to " + actual.substr(0, 12));
}

}  // namespace alvtts
