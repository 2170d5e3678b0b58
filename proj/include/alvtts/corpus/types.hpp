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
#include <compare>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "alvtts/error.hpp"

namespace alvtts::corpus {

/// Dialect identifier token, e.g. "DLA" or "osaka". Usable directly as a vocabulary entry.
class DialectId {
 public:
  DialectId() = default;
  explicit DialectId(std::string id) : id_(std::move(id)) {
    require(!id_.empty(), ErrorKind::kValidation, "dialect id must be nonempty");
    require(id_.find_first_of(" \t\n") == std::string::npos, ErrorKind::kValidation,
            "dialect id must not contain whitespace: '" + id_ + "'");
  }

  const std::string& str() const { return id_; }
  auto operator<=>(const DialectId&) const = default;

 private:
  std::string id_;
};

struct Span {
  int phoneme_index = 0;
  int start_frame = 0;
  int end_frame = 0;  // exclusive

  int frames() const { return end_frame - start_frame; }
  bool operator==(const Span&) const = default;
};

struct Alignment {
  std::vector<Span> spans;

  int total_frames() const { return spans.empty() ? 0 : spans.back().end_frame; }

  std::vector<int> durations() const {
    std::vector<int> d;
    d.reserve(spans.size());
    for (const auto& s : spans) d.push_back(s.frames());
    return d;
  }

  /// Checks the span invariants against an utterance of `phoneme_count` phonemes.
  void validate(std::size_t phoneme_count) const {
    require(spans.size() == phoneme_count, ErrorKind::kValidation,
            "alignment has " + std::to_string(spans.size()) + " spans for " + std::to_string(phoneme_count) +
                " phonemes");
    for (std::size_t i = 0; i < spans.size(); ++i) {
      const Span& s = spans[i];
      require(s.phoneme_index == static_cast<int>(i), ErrorKind::kValidation,
              "alignment phoneme indices must run 0,1,2,... (span " + std::to_string(i) + ")");
      require(s.start_frame >= 0 && s.start_frame < s.end_frame, ErrorKind::kValidation,
              "alignment span " + std::to_string(i) + " is empty or negative");
      if (i > 0) {
        require(s.start_frame >= spans[i - 1].end_frame, ErrorKind::kValidation,
                "alignment spans " + std::to_string(i - 1) + " and " + std::to_string(i) + " overlap");
        require(s.start_frame == spans[i - 1].end_frame, ErrorKind::kValidation,
                "alignment spans " + std::to_string(i - 1) + " and " + std::to_string(i) + " are not contiguous");
      }
    }
  }

  static Alignment from_durations(const std::vector<int>& durations, int first_frame = 0) {
    Alignment a;
    int t = first_frame;
    for (std::size_t i = 0; i < durations.size(); ++i) {
      a.spans.push_back({static_cast<int>(i), t, t + durations[i]});
      t += durations[i];
    }
    return a;
  }

  bool operator==(const Alignment&) const = default;
};

struct Utterance {
  std::string utt_id;
  std::string speaker_id;
  DialectId dialect;
  std::vector<std::string> graphemes;
  std::vector<std::string> phonemes;
  Alignment alignment;
  std::string feature_path;
  std::optional<std::string> oracle_accent;  // one H/L symbol per mora, synthetic data only

  void validate() const {
    require(!utt_id.empty() && !speaker_id.empty(), ErrorKind::kValidation, "utterance id and speaker are required");
    alignment.validate(phonemes.size());
    if (oracle_accent) {
      for (char c : *oracle_accent)
        require(c == 'H' || c == 'L', ErrorKind::kValidation, "oracle accent symbols must be H or L in " + utt_id);
    }
  }

  bool operator==(const Utterance&) const = default;
};

struct LexiconEntry {
  std::vector<std::string> phonemes;
  int morae = 0;
  bool operator==(const LexiconEntry&) const = default;
};

/// Word -> pronunciation dictionary. Word ids follow the sorted word order.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::map<std::string, LexiconEntry> entries) : entries_(std::move(entries)) { reindex(); }

  void add(const std::string& word, LexiconEntry entry) {
    require(!word.empty(), ErrorKind::kValidation, "lexicon word must be nonempty");
    require(entry.morae >= 1 && !entry.phonemes.empty() && entry.phonemes.size() % entry.morae == 0,
            ErrorKind::kValidation, "lexicon entry for " + word + " must split evenly into morae");
    entries_[word] = std::move(entry);
    reindex();
  }

  bool contains(const std::string& word) const { return entries_.count(word) != 0; }

  const LexiconEntry& at(const std::string& word) const {
    auto it = entries_.find(word);
    require(it != entries_.end(), ErrorKind::kVocabulary, "out-of-vocabulary word '" + word + "'");
    return it->second;
  }

  int word_id(const std::string& word) const {
    auto it = ids_.find(word);
    require(it != ids_.end(), ErrorKind::kVocabulary, "out-of-vocabulary word '" + word + "'");
    return it->second;
  }

  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, LexiconEntry>& entries() const { return entries_; }

  bool operator==(const Lexicon& other) const { return entries_ == other.entries_; }

 private:
  void reindex() {
    words_.clear();
    ids_.clear();
    for (const auto& [w, e] : entries_) {
      ids_.emplace(w, static_cast<int>(words_.size()));
      words_.push_back(w);
    }
  }

  std::map<std::string, LexiconEntry> entries_;
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

/// Concatenation of per-word pronunciations.
inline std::vector<std::string> g2p_lookup(const std::vector<std::string>& graphemes, const Lexicon& lexicon) {
  std::vector<std::string> out;
  for (const auto& word : graphemes) {
    const auto& entry = lexicon.at(word);
    out.insert(out.end(), entry.phonemes.begin(), entry.phonemes.end());
  }
  return out;
}

/// Half-open phoneme range [begin, end).
struct PhonemeRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  bool operator==(const PhonemeRange&) const = default;
};

inline std::vector<PhonemeRange> word_ranges(const std::vector<std::string>& graphemes, const Lexicon& lexicon) {
  std::vector<PhonemeRange> out;
  int offset = 0;
  for (const auto& word : graphemes) {
    int n = static_cast<int>(lexicon.at(word).phonemes.size());
    out.push_back({offset, offset + n});
    offset += n;
  }
  return out;
}

/// Phoneme ranges of every mora, in order; each word's phonemes split evenly into its morae.
inline std::vector<PhonemeRange> mora_ranges(const std::vector<std::string>& graphemes, const Lexicon& lexicon) {
  std::vector<PhonemeRange> out;
  int offset = 0;
  for (const auto& word : graphemes) {
    const auto& entry = lexicon.at(word);
    int per = static_cast<int>(entry.phonemes.size()) / entry.morae;
    for (int m = 0; m < entry.morae; ++m) out.push_back({offset + m * per, offset + (m + 1) * per});
    offset += static_cast<int>(entry.phonemes.size());
  }
  return out;
}

/// Per-dialect oracle accent patterns: word -> one H/L symbol per mora.
struct AccentRuleTable {
  DialectId dialect;
  std::map<std::string, std::string> rules;

  const std::string& pattern(const std::string& word) const {
    auto it = rules.find(word);
    require(it != rules.end(), ErrorKind::kVocabulary,
            "no accent rule for '" + word + "' in dialect " + dialect.str());
    return it->second;
  }

  std::string sentence_pattern(const std::vector<std::string>& graphemes) const {
    std::string out;
    for (const auto& w : graphemes) out += pattern(w);
    return out;
  }

  void validate(const Lexicon& lexicon) const {
    for (const auto& word : lexicon.words()) {
      const std::string& p = pattern(word);
      require(static_cast<int>(p.size()) == lexicon.at(word).morae, ErrorKind::kValidation,
              "accent rule length for '" + word + "' differs from its mora count");
      for (char c : p) require(c == 'H' || c == 'L', ErrorKind::kValidation, "accent symbols must be H or L");
    }
  }

  bool operator==(const AccentRuleTable&) const = default;
};

inline std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace alvtts::corpus
