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

// Dialect data augmentation: prompt construction, translator backends
// (remote LLM over JSON/HTTP, offline word substitution), corpus-wide
// translation with retries, and assembly of the multi-dialect text corpus.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

// Eigen must come before httplib: <resolv.h> defines a _res macro that Eigen uses as a name.
#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include "alvtts/corpus/types.hpp"
#include "alvtts/error.hpp"
#include "alvtts/mdplbert/mdplbert.hpp"

namespace alvtts::augment {

inline constexpr std::string_view kDialectPlaceholder = "[target dialect]";
inline constexpr std::string_view kSentencePlaceholder = "[sentence]";

class PromptTemplate {
 public:
  PromptTemplate() : PromptTemplate("Rewrite the following sentences as if they were in [target dialect]: [sentence]") {}

  explicit PromptTemplate(std::string text) : text_(std::move(text)) {
    for (auto placeholder : {kDialectPlaceholder, kSentencePlaceholder}) {
      const auto first = text_.find(placeholder);
      require(first != std::string::npos, ErrorKind::kConfig,
              "prompt template lacks placeholder " + std::string(placeholder));
      require(text_.find(placeholder, first + 1) == std::string::npos, ErrorKind::kConfig,
              "prompt template repeats placeholder " + std::string(placeholder));
    }
  }

  /// Single-pass substitution: placeholder positions are located in the template
  /// only, so substituted text is never rescanned.
  std::string render(const std::string& sentence, const std::string& target_dialect) const {
    const auto d = text_.find(kDialectPlaceholder);
    const auto s = text_.find(kSentencePlaceholder);
    std::string out;
    if (d < s) {
      out = text_.substr(0, d) + target_dialect + text_.substr(d + kDialectPlaceholder.size(), s - d - kDialectPlaceholder.size()) +
            sentence + text_.substr(s + kSentencePlaceholder.size());
    } else {
      out = text_.substr(0, s) + sentence + text_.substr(s + kSentencePlaceholder.size(), d - s - kSentencePlaceholder.size()) +
            target_dialect + text_.substr(d + kDialectPlaceholder.size());
    }
    return out;
  }

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

inline std::string build_prompt(const std::string& sentence, const std::string& target_dialect,
                                const PromptTemplate& prompt = PromptTemplate()) {
  require(!sentence.empty(), ErrorKind::kInput, "cannot build a prompt for an empty sentence");
  return prompt.render(sentence, target_dialect);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

class TranslatorBackend {
 public:
  virtual ~TranslatorBackend() = default;
  /// Returns the translated sentence or throws Error(kRemote) on failure.
  virtual std::string translate(const std::string& sentence, const std::string& target_dialect) = 0;
};

/// Per-dialect word substitution; words without an entry pass through.
class RuleBasedTranslator final : public TranslatorBackend {
 public:
  using Table = std::map<std::string, std::string>;

  RuleBasedTranslator() = default;
  explicit RuleBasedTranslator(std::map<std::string, Table> tables) : tables_(std::move(tables)) {}

  void set_table(const std::string& dialect, Table table) { tables_[dialect] = std::move(table); }

  std::string translate(const std::string& sentence, const std::string& target_dialect) override {
    auto words = corpus::split_ws(sentence);
    auto it = tables_.find(target_dialect);
    if (it != tables_.end())
      for (auto& w : words) {
        auto sub = it->second.find(w);
        if (sub != it->second.end()) w = sub->second;
      }
    return corpus::join(words);
  }

 private:
  std::map<std::string, Table> tables_;
};

/// Tab-separated `dialect \t source_word \t target_word` substitution table.
inline RuleBasedTranslator load_rule_translator(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kConfig, "cannot open substitution table " + path.string());
  std::map<std::string, RuleBasedTranslator::Table> tables;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = corpus::split_on(line, '\t');
    require(f.size() == 3, ErrorKind::kParse, "substitution table line " + std::to_string(n) + ": expected 3 fields");
    tables[f[0]][f[1]] = f[2];
  }
  return RuleBasedTranslator(std::move(tables));
}

struct RemoteOptions {
  std::string base_url = "http://127.0.0.1:8080";  // scheme://host:port
  std::string path = "/v1/completions";
  std::string model = "instruct-model";
  int max_tokens = 256;
  double timeout_seconds = 60.0;
  std::string api_key_env = "ALVTTS_LLM_API_KEY";  // sent as a bearer token when set
  PromptTemplate prompt;
};

/// One text-completion request per sentence: POST {model, prompt, max_tokens},
/// response {text}. The reply is whitespace-trimmed and otherwise untouched.
class RemoteLlmTranslator final : public TranslatorBackend {
 public:
  explicit RemoteLlmTranslator(RemoteOptions options) : options_(std::move(options)) {}

  std::string translate(const std::string& sentence, const std::string& target_dialect) override {
    httplib::Client client(options_.base_url);
    const auto timeout = std::chrono::duration<double>(options_.timeout_seconds);
    const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
    client.set_connection_timeout(sec.count(), usec.count());
    client.set_read_timeout(sec.count(), usec.count());
    client.set_write_timeout(sec.count(), usec.count());
    httplib::Headers headers;
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
    const nlohmann::json body = {{"model", options_.model},
                                 {"prompt", build_prompt(sentence, target_dialect, options_.prompt)},
                                 {"max_tokens", options_.max_tokens}};
    auto res = client.Post(options_.path, headers, body.dump(), "application/json");
    if (!res) fail(ErrorKind::kRemote, "request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) fail(ErrorKind::kRemote, "HTTP status " + std::to_string(res->status));
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::kRemote, "malformed response: not JSON");
    }
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
      fail(ErrorKind::kRemote, "malformed response: missing string field 'text'");
    std::string text = trim(reply["text"].get<std::string>());
    if (text.empty()) fail(ErrorKind::kRemote, "malformed response: empty translation");
    return text;
  }

  const RemoteOptions& options() const { return options_; }

 private:
  RemoteOptions options_;
};

struct TranslationRecord {
  std::size_t index = 0;
  std::string original;
  std::optional<std::string> translated;
  std::string error;
  int attempts = 0;

  bool ok() const { return translated.has_value(); }
};

struct TranslateOptions {
  int max_attempts = 3;
  double initial_backoff_seconds = 1.0;  // doubles after each failed attempt
  int max_in_flight = 1;
  std::filesystem::path audit_log;  // JSON lines; empty disables
  std::function<void(double)> sleep = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };
};

/// Translates every sentence; failures after all attempts become error records.
/// Results are ordered by input index regardless of completion order.
inline std::vector<TranslationRecord> translate_corpus(const std::vector<std::string>& sentences,
                                                       const std::string& target_dialect, TranslatorBackend& backend,
                                                       const TranslateOptions& options = {},
                                                       const PromptTemplate& prompt = PromptTemplate()) {
  require(options.max_attempts >= 1, ErrorKind::kConfig, "max_attempts must be >= 1");
  std::vector<TranslationRecord> records(sentences.size());
  std::mutex audit_mutex;
  std::ofstream audit;
  if (!options.audit_log.empty()) {
    if (options.audit_log.has_parent_path()) std::filesystem::create_directories(options.audit_log.parent_path());
    audit.open(options.audit_log, std::ios::app);
    require(static_cast<bool>(audit), ErrorKind::kIo, "cannot open audit log " + options.audit_log.string());
  }
  auto log = [&](const nlohmann::json& entry) {
    if (!audit.is_open()) return;
    std::lock_guard<std::mutex> lock(audit_mutex);
    audit << entry.dump() << '\n';
    audit.flush();
  };

  auto work = [&](std::size_t i) {
    TranslationRecord& rec = records[i];
    rec.index = i;
    rec.original = sentences[i];
    double backoff = options.initial_backoff_seconds;
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
      rec.attempts = attempt;
      nlohmann::json entry = {{"index", i}, {"attempt", attempt}, {"target_dialect", target_dialect}};
      try {
        entry["prompt"] = build_prompt(sentences[i], target_dialect, prompt);
        std::string out = backend.translate(sentences[i], target_dialect);
        if (trim(out).empty()) fail(ErrorKind::kRemote, "empty translation");
        rec.translated = trim(out);
        rec.error.clear();
        entry["response"] = *rec.translated;
        log(entry);
        return;
      } catch (const Error& e) {
        rec.error = e.what();
        entry["error"] = rec.error;
        log(entry);
        if (e.kind() == ErrorKind::kInput) return;
      }
      if (attempt < options.max_attempts) {
        options.sleep(backoff);
        backoff *= 2.0;
      }
    }
  };

  const int workers = std::max(1, std::min<int>(options.max_in_flight, static_cast<int>(sentences.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < sentences.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < sentences.size(); i = next++) work(i);
      });
    for (auto& t : pool) t.join();
  }
  return records;
}

inline std::string format_translation_records(const std::vector<TranslationRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j = {{"index", r.index}, {"original", r.original}, {"attempts", r.attempts}};
    if (r.translated) j["translated"] = *r.translated;
    else j["error"] = r.error;
    out += j.dump() + '\n';
  }
  return out;
}

inline std::vector<TranslationRecord> parse_translation_records(std::istream& in) {
  std::vector<TranslationRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    TranslationRecord r;
    r.index = j.at("index");
    r.original = j.at("original");
    r.attempts = j.at("attempts");
    if (j.contains("translated")) r.translated = j["translated"].get<std::string>();
    if (j.contains("error")) r.error = j["error"].get<std::string>();
    out.push_back(std::move(r));
  }
  return out;
}

struct SourceSentence {
  corpus::DialectId dialect;
  std::vector<std::string> graphemes;
};

struct AssembledCorpus {
  std::vector<mdplbert::TextCorpusEntry> entries;
  std::size_t skipped = 0;
};

/// Originals tagged with their own dialect, then each successful translation
/// tagged with `target`. Lines whose words are not in the lexicon are skipped.
inline AssembledCorpus assemble_multidialect_corpus(const std::vector<SourceSentence>& originals,
                                                    const std::vector<TranslationRecord>& translations,
                                                    const corpus::DialectId& target, const corpus::Lexicon& lexicon,
                                                    std::ostream* warnings = &std::cerr) {
  AssembledCorpus out;
  auto emit = [&](const corpus::DialectId& dialect, const std::vector<std::string>& graphemes) {
    try {
      auto phonemes = corpus::g2p_lookup(graphemes, lexicon);
      if (phonemes.empty()) fail(ErrorKind::kInput, "empty sentence");
      out.entries.push_back({dialect, graphemes, std::move(phonemes)});
    } catch (const Error& e) {
      ++out.skipped;
      if (warnings) *warnings << "warning: skipping '" << corpus::join(graphemes) << "': " << e.what() << '\n';
    }
  };
  for (const auto& s : originals) emit(s.dialect, s.graphemes);
  for (const auto& t : translations)
    if (t.translated) emit(target, corpus::split_ws(*t.translated));
  return out;
}

}  // namespace alvtts::augment
