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

// Synthetic two-dialect pitch-accent language. Words are 2-4 morae of CV
// phoneme pairs; every word carries an H/L pattern per dialect, and a fixed
// fraction of the lexicon uses the mirrored pattern in the second dialect.
// Utterances are rendered as frame-level log-F0 contours (mora target +
// speaker offset + declination + noise) plus an 8-channel spectral proxy.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "alvtts/corpus/feature_file.hpp"
#include "alvtts/corpus/manifest.hpp"
#include "alvtts/corpus/types.hpp"
#include "alvtts/error.hpp"

namespace alvtts::corpus {

inline const std::vector<std::string>& consonant_inventory() {
  static const std::vector<std::string> c = {"b", "d", "g", "h", "k", "m", "n", "p", "r", "s", "t", "w", "y", "z"};
  return c;
}

inline const std::vector<std::string>& vowel_inventory() {
  static const std::vector<std::string> v = {"a", "e", "i", "o", "u"};
  return v;
}

/// Sorted phoneme inventory of the synthetic language.
inline std::vector<std::string> phoneme_inventory() {
  std::vector<std::string> all = consonant_inventory();
  all.insert(all.end(), vowel_inventory().begin(), vowel_inventory().end());
  std::sort(all.begin(), all.end());
  return all;
}

inline bool is_vowel(const std::string& p) {
  const auto& v = vowel_inventory();
  return std::find(v.begin(), v.end(), p) != v.end();
}

struct SpeakerSpec {
  std::string speaker_id;
  DialectId dialect;
  double log_f0_offset = 0.0;
  double duration_scale = 1.0;
};

struct SyntheticCorpusConfig {
  int lexicon_size = 40;
  int sentence_count = 2000;
  int min_words = 3;
  int max_words = 6;
  double divergent_fraction = 0.5;
  std::vector<SpeakerSpec> speakers = {{"spkA", DialectId("DLA"), 0.0, 1.0}, {"spkB", DialectId("DLB"), 0.25, 1.15}};
  double frame_rate = 50.0;
  double high_logf0 = 5.6;
  double low_logf0 = 5.1;
  double noise_std = 0.05;
  double declination_per_second = -0.1;
  int spectral_dim = 8;
  std::uint64_t seed = 1;

  /// Dialects in order of first appearance among the speakers; the first is the base dialect.
  std::vector<DialectId> dialects() const {
    std::vector<DialectId> out;
    for (const auto& s : speakers)
      if (std::find(out.begin(), out.end(), s.dialect) == out.end()) out.push_back(s.dialect);
    return out;
  }

  void validate() const {
    require(lexicon_size >= 2, ErrorKind::kConfig, "lexicon_size must be >= 2");
    require(sentence_count >= 1, ErrorKind::kConfig, "sentence_count must be >= 1");
    require(min_words >= 1 && max_words >= min_words, ErrorKind::kConfig, "words_per_sentence range is invalid");
    require(divergent_fraction >= 0.0 && divergent_fraction <= 1.0, ErrorKind::kConfig,
            "divergent_fraction must lie in [0, 1]");
    require(high_logf0 > low_logf0, ErrorKind::kConfig, "high_logf0 must exceed low_logf0");
    require(frame_rate > 0.0, ErrorKind::kConfig, "frame_rate must be positive");
    require(noise_std >= 0.0, ErrorKind::kConfig, "noise_std must be nonnegative");
    require(spectral_dim >= 0, ErrorKind::kConfig, "spectral_dim must be nonnegative");
    require(!speakers.empty(), ErrorKind::kConfig, "at least one speaker is required");
    std::set<std::string> ids;
    for (const auto& s : speakers) {
      require(ids.insert(s.speaker_id).second, ErrorKind::kConfig, "duplicate speaker id " + s.speaker_id);
      require(s.duration_scale > 0.0, ErrorKind::kConfig, "duration_scale must be positive");
    }
    require(dialects().size() == 2, ErrorKind::kConfig, "the synthetic corpus needs exactly two dialects");
  }
};

struct SyntheticCorpus {
  std::vector<Utterance> manifest;
  std::vector<FrameMatrix> features;  // aligned with manifest; column 0 is log-F0
  std::map<DialectId, AccentRuleTable> rule_tables;
  Lexicon lexicon;
  std::vector<DialectId> dialects;
  double frame_rate = 50.0;
};

/// Fixed per-phoneme spectral templates and per-speaker offsets used by the renderer.
struct SpectralModel {
  std::map<std::string, std::vector<double>> phoneme_templates;
  std::map<std::string, std::vector<double>> speaker_offsets;
};

namespace detail {

inline std::string random_pattern(int morae, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  for (;;) {
    std::string p;
    for (int m = 0; m < morae; ++m) p += coin(rng) ? 'H' : 'L';
    if (p.find('H') != std::string::npos && p.find('L') != std::string::npos) return p;
  }
}

inline std::string mirror_pattern(const std::string& p) {
  std::string out = p;
  for (char& c : out) c = (c == 'H') ? 'L' : 'H';
  return out;
}

}  // namespace detail

inline SpectralModel make_spectral_model(const SyntheticCorpusConfig& config, std::mt19937_64& rng) {
  SpectralModel model;
  std::uniform_real_distribution<double> tmpl(-1.0, 1.0);
  std::uniform_real_distribution<double> spk(-0.3, 0.3);
  for (const auto& p : phoneme_inventory()) {
    std::vector<double> v(static_cast<std::size_t>(config.spectral_dim));
    for (auto& x : v) x = tmpl(rng);
    model.phoneme_templates.emplace(p, std::move(v));
  }
  for (const auto& s : config.speakers) {
    std::vector<double> v(static_cast<std::size_t>(config.spectral_dim));
    for (auto& x : v) x = spk(rng);
    model.speaker_offsets.emplace(s.speaker_id, std::move(v));
  }
  return model;
}

/// Renders one sentence for `speaker` under `rules`. Returns the utterance
/// (without feature path) and its frames; `rng` drives durations and noise.
inline std::pair<Utterance, FrameMatrix> render_utterance(const std::string& utt_id,
                                                          const std::vector<std::string>& words,
                                                          const SpeakerSpec& speaker, const AccentRuleTable& rules,
                                                          const Lexicon& lexicon, const SpectralModel& spectral,
                                                          const SyntheticCorpusConfig& config,
                                                          std::mt19937_64& rng) {
  Utterance u;
  u.utt_id = utt_id;
  u.speaker_id = speaker.speaker_id;
  u.dialect = rules.dialect;
  u.graphemes = words;
  u.phonemes = g2p_lookup(words, lexicon);
  const std::string accent = rules.sentence_pattern(words);
  u.oracle_accent = accent;

  std::uniform_int_distribution<int> jitter(0, 1);
  std::vector<int> durations;
  durations.reserve(u.phonemes.size());
  for (const auto& p : u.phonemes) {
    const int base = (is_vowel(p) ? 3 : 2) + jitter(rng);
    durations.push_back(std::max(1, static_cast<int>(std::lround(base * speaker.duration_scale))));
  }
  u.alignment = Alignment::from_durations(durations);

  const auto morae = mora_ranges(words, lexicon);
  std::vector<char> phoneme_accent(u.phonemes.size());
  for (std::size_t m = 0; m < morae.size(); ++m)
    for (int p = morae[m].begin; p < morae[m].end; ++p) phoneme_accent[static_cast<std::size_t>(p)] = accent[m];

  const int dims = 1 + config.spectral_dim;
  FrameMatrix frames(u.alignment.total_frames(), dims);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto& spk_offset = spectral.speaker_offsets.at(speaker.speaker_id);
  for (const auto& span : u.alignment.spans) {
    const auto p = static_cast<std::size_t>(span.phoneme_index);
    const double target = phoneme_accent[p] == 'H' ? config.high_logf0 : config.low_logf0;
    const auto& tmpl = spectral.phoneme_templates.at(u.phonemes[p]);
    for (int t = span.start_frame; t < span.end_frame; ++t) {
      const double seconds = t / config.frame_rate;
      double f0 = target + speaker.log_f0_offset + config.declination_per_second * seconds;
      if (config.noise_std > 0) f0 += config.noise_std * noise(rng);
      frames(t, 0) = static_cast<float>(f0);
      for (int d = 0; d < config.spectral_dim; ++d) {
        double v = tmpl[static_cast<std::size_t>(d)] + spk_offset[static_cast<std::size_t>(d)];
        if (config.noise_std > 0) v += config.noise_std * noise(rng);
        frames(t, 1 + d) = static_cast<float>(v);
      }
    }
  }
  return {std::move(u), std::move(frames)};
}

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  SyntheticCorpus corpus;
  corpus.frame_rate = config.frame_rate;
  corpus.dialects = config.dialects();

  // Lexicon: unique CV words of 2-4 morae.
  const auto& cons = consonant_inventory();
  const auto& vows = vowel_inventory();
  std::uniform_int_distribution<int> mora_count(2, 4);
  std::uniform_int_distribution<std::size_t> pick_c(0, cons.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_v(0, vows.size() - 1);
  std::vector<std::string> creation_order;
  while (static_cast<int>(corpus.lexicon.size()) < config.lexicon_size) {
    const int morae = mora_count(rng);
    LexiconEntry entry;
    entry.morae = morae;
    std::string spelling;
    for (int m = 0; m < morae; ++m) {
      const auto& c = cons[pick_c(rng)];
      const auto& v = vows[pick_v(rng)];
      entry.phonemes.push_back(c);
      entry.phonemes.push_back(v);
      spelling += c + v;
    }
    if (corpus.lexicon.contains(spelling)) continue;
    corpus.lexicon.add(spelling, std::move(entry));
    creation_order.push_back(spelling);
  }

  // Accent rules: base dialect random, exactly floor(fraction * N) words mirrored in the other.
  const DialectId base = corpus.dialects[0];
  const DialectId other = corpus.dialects[1];
  AccentRuleTable base_rules{base, {}};
  AccentRuleTable other_rules{other, {}};
  for (const auto& w : creation_order) base_rules.rules[w] = detail::random_pattern(corpus.lexicon.at(w).morae, rng);
  const auto divergent_count =
      static_cast<std::size_t>(std::floor(config.divergent_fraction * static_cast<double>(config.lexicon_size) + 1e-9));
  std::vector<std::string> shuffled = creation_order;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::set<std::string> divergent(shuffled.begin(), shuffled.begin() + static_cast<long>(divergent_count));
  for (const auto& w : creation_order)
    other_rules.rules[w] = divergent.count(w) ? detail::mirror_pattern(base_rules.rules[w]) : base_rules.rules[w];
  corpus.rule_tables.emplace(base, std::move(base_rules));
  corpus.rule_tables.emplace(other, std::move(other_rules));

  const SpectralModel spectral = make_spectral_model(config, rng);

  std::uniform_int_distribution<int> word_count(config.min_words, config.max_words);
  std::uniform_int_distribution<std::size_t> pick_word(0, creation_order.size() - 1);
  const auto& words = corpus.lexicon.words();
  for (int i = 0; i < config.sentence_count; ++i) {
    const SpeakerSpec& speaker = config.speakers[static_cast<std::size_t>(i) % config.speakers.size()];
    std::vector<std::string> sentence;
    const int n = word_count(rng);
    for (int k = 0; k < n; ++k) sentence.push_back(words[pick_word(rng)]);
    char id[32];
    std::snprintf(id, sizeof id, "utt%05d", i);
    auto [utt, frames] = render_utterance(id, sentence, speaker, corpus.rule_tables.at(speaker.dialect),
                                          corpus.lexicon, spectral, config, rng);
    utt.feature_path = std::string("feats/") + id + ".alvf";
    corpus.manifest.push_back(std::move(utt));
    corpus.features.push_back(std::move(frames));
  }
  return corpus;
}

inline std::vector<std::string> divergent_words(const AccentRuleTable& a, const AccentRuleTable& b) {
  std::vector<std::string> out;
  for (const auto& [w, p] : a.rules) {
    auto it = b.rules.find(w);
    if (it != b.rules.end() && it->second != p) out.push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lexicon and rule-table files

inline std::string format_lexicon(const Lexicon& lexicon) {
  std::string out;
  for (const auto& [w, e] : lexicon.entries()) out += w + '\t' + join(e.phonemes) + '\t' + std::to_string(e.morae) + '\n';
  return out;
}

inline Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open lexicon " + path.string());
  Lexicon lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_on(line, '\t');
    require(f.size() == 3, ErrorKind::kParse, "lexicon line " + std::to_string(line_no) + ": expected 3 fields");
    LexiconEntry e{split_ws(f[1]), 0};
    try {
      e.morae = std::stoi(f[2]);
    } catch (const std::exception&) {
      fail(ErrorKind::kParse, "lexicon line " + std::to_string(line_no) + ": bad mora count");
    }
    lexicon.add(f[0], std::move(e));
  }
  return lexicon;
}

inline std::string format_rule_tables(const std::map<DialectId, AccentRuleTable>& tables) {
  std::string out;
  for (const auto& [d, table] : tables)
    for (const auto& [w, p] : table.rules) out += d.str() + '\t' + w + '\t' + p + '\n';
  return out;
}

inline std::map<DialectId, AccentRuleTable> load_rule_tables(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open accent rules " + path.string());
  std::map<DialectId, AccentRuleTable> tables;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_on(line, '\t');
    require(f.size() == 3, ErrorKind::kParse, "accent rule line " + std::to_string(line_no) + ": expected 3 fields");
    DialectId d(f[0]);
    auto& table = tables[d];
    table.dialect = d;
    table.rules[f[1]] = f[2];
  }
  return tables;
}

// ---------------------------------------------------------------------------
// Corpus directory: manifest.tsv, lexicon.tsv, accent_rules.tsv, corpus.json, feats/

struct CorpusBundle {
  std::filesystem::path directory;
  std::vector<Utterance> manifest;
  Lexicon lexicon;
  std::map<DialectId, AccentRuleTable> rule_tables;
  std::vector<DialectId> dialects;
  double frame_rate = 50.0;

  FrameMatrix read_features(const Utterance& u) const {
    return read_feature_file(resolve_feature_path(directory, u));
  }
};

inline void write_corpus_directory(const SyntheticCorpus& corpus, const SyntheticCorpusConfig& config,
                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "feats");
  save_manifest(corpus.manifest, dir / "manifest.tsv");
  write_file_bytes(dir / "lexicon.tsv", format_lexicon(corpus.lexicon));
  write_file_bytes(dir / "accent_rules.tsv", format_rule_tables(corpus.rule_tables));
  nlohmann::json meta;
  meta["frame_rate"] = corpus.frame_rate;
  std::vector<std::string> dialects;
  for (const auto& d : corpus.dialects) dialects.push_back(d.str());
  meta["dialects"] = dialects;
  meta["seed"] = config.seed;
  meta["divergent_fraction"] = config.divergent_fraction;
  meta["feature_dim"] = 1 + config.spectral_dim;
  write_file_bytes(dir / "corpus.json", meta.dump(2) + "\n");
  for (std::size_t i = 0; i < corpus.manifest.size(); ++i)
    write_feature_file(dir / corpus.manifest[i].feature_path, corpus.features[i]);
}

inline CorpusBundle load_corpus_directory(const std::filesystem::path& dir) {
  require(std::filesystem::exists(dir / "manifest.tsv"), ErrorKind::kConfig,
          "no corpus at " + dir.string() + " (manifest.tsv missing)");
  CorpusBundle b;
  b.directory = dir;
  b.manifest = load_manifest(dir / "manifest.tsv");
  b.lexicon = load_lexicon(dir / "lexicon.tsv");
  if (std::filesystem::exists(dir / "accent_rules.tsv")) b.rule_tables = load_rule_tables(dir / "accent_rules.tsv");
  if (std::filesystem::exists(dir / "corpus.json")) {
    const auto meta = nlohmann::json::parse(read_file_bytes(dir / "corpus.json"));
    b.frame_rate = meta.value("frame_rate", 50.0);
    for (const auto& d : meta.at("dialects")) b.dialects.emplace_back(d.get<std::string>());
  } else {
    for (const auto& u : b.manifest)
      if (std::find(b.dialects.begin(), b.dialects.end(), u.dialect) == b.dialects.end()) b.dialects.push_back(u.dialect);
  }
  return b;
}

/// Deterministic per-speaker train/validation/test split (indices into the manifest).
struct CorpusSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

inline CorpusSplit split_corpus(const std::vector<Utterance>& manifest, std::uint64_t seed,
                                double validation_fraction = 0.1, double test_fraction = 0.1) {
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < manifest.size(); ++i) by_speaker[manifest[i].speaker_id].push_back(i);
  CorpusSplit split;
  std::mt19937_64 rng(seed ^ 0x5eedc0deULL);
  for (auto& [spk, idx] : by_speaker) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = idx.size();
    const auto n_test = static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::round(validation_fraction * static_cast<double>(n)));
    for (std::size_t k = 0; k < n; ++k) {
      if (k < n_test) split.test.push_back(idx[k]);
      else if (k < n_test + n_val) split.validation.push_back(idx[k]);
      else split.train.push_back(idx[k]);
    }
  }
  for (auto* v : {&split.train, &split.validation, &split.test}) std::sort(v->begin(), v->end());
  return split;
}

}  // namespace alvtts::corpus
