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

// Manifest: one utterance per line, tab separated:
//   utt_id  speaker_id  dialect  graphemes  phonemes  alignment  feature_path  [oracle_accent]
// graphemes/phonemes are space separated; alignment is `index:start:end` triples joined by ';'.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "alvtts/checkpoint.hpp"
#include "alvtts/corpus/types.hpp"
#include "alvtts/error.hpp"

namespace alvtts::corpus {

inline std::string format_alignment(const Alignment& a) {
  std::string out;
  for (std::size_t i = 0; i < a.spans.size(); ++i) {
    if (i) out += ';';
    const Span& s = a.spans[i];
    out += std::to_string(s.phoneme_index) + ':' + std::to_string(s.start_frame) + ':' + std::to_string(s.end_frame);
  }
  return out;
}

inline std::string format_manifest_line(const Utterance& u) {
  std::string line = u.utt_id + '\t' + u.speaker_id + '\t' + u.dialect.str() + '\t' + join(u.graphemes) + '\t' +
                     join(u.phonemes) + '\t' + format_alignment(u.alignment) + '\t' + u.feature_path;
  if (u.oracle_accent) line += '\t' + *u.oracle_accent;
  return line;
}

inline std::string format_manifest(const std::vector<Utterance>& utterances) {
  std::string out;
  for (const auto& u : utterances) out += format_manifest_line(u) + '\n';
  return out;
}

namespace detail {
inline int parse_int(const std::string& text, std::size_t line_no, const char* what) {
  try {
    std::size_t used = 0;
    int v = std::stoi(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kParse, "manifest line " + std::to_string(line_no) + ": bad " + what + " '" + text + "'");
}
}  // namespace detail

/// Parses one manifest line; parse errors name `line_no`, invariant violations raise validation errors.
inline Utterance parse_manifest_line(const std::string& line, std::size_t line_no) {
  const auto fields = split_on(line, '\t');
  const std::string where = "manifest line " + std::to_string(line_no);
  require(fields.size() == 7 || fields.size() == 8, ErrorKind::kParse,
          where + ": expected 7 or 8 tab-separated fields, found " + std::to_string(fields.size()));
  Utterance u;
  u.utt_id = fields[0];
  u.speaker_id = fields[1];
  require(!fields[2].empty(), ErrorKind::kParse, where + ": empty dialect");
  u.dialect = DialectId(fields[2]);
  u.graphemes = split_ws(fields[3]);
  u.phonemes = split_ws(fields[4]);
  if (!fields[5].empty()) {
    for (const auto& triple : split_on(fields[5], ';')) {
      const auto parts = split_on(triple, ':');
      require(parts.size() == 3, ErrorKind::kParse, where + ": alignment entry '" + triple + "' is not index:start:end");
      u.alignment.spans.push_back({detail::parse_int(parts[0], line_no, "phoneme index"),
                                   detail::parse_int(parts[1], line_no, "start frame"),
                                   detail::parse_int(parts[2], line_no, "end frame")});
    }
  }
  u.feature_path = fields[6];
  if (fields.size() == 8 && !fields[7].empty()) u.oracle_accent = fields[7];
  try {
    u.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kValidation, where + ": " + e.what());
  }
  return u;
}

inline std::vector<Utterance> parse_manifest(std::istream& in) {
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(parse_manifest_line(line, line_no));
  }
  return out;
}

inline std::vector<Utterance> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open manifest " + path.string());
  return parse_manifest(in);
}

inline void save_manifest(const std::vector<Utterance>& utterances, const std::filesystem::path& path) {
  for (const auto& u : utterances) u.validate();
  write_file_bytes(path, format_manifest(utterances));
}

/// Feature paths are stored relative to the manifest's directory unless absolute.
inline std::filesystem::path resolve_feature_path(const std::filesystem::path& manifest_dir, const Utterance& u) {
  std::filesystem::path p(u.feature_path);
  return p.is_absolute() ? p : manifest_dir / p;
}

}  // namespace alvtts::corpus
