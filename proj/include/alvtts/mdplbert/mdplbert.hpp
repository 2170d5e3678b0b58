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

// Multi-dialect phoneme-level BERT. Input is a dialect token followed by the
// phoneme tokens of a sentence; pre-training predicts masked phonemes and the
// word (grapheme) id of every phoneme position.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "alvtts/checkpoint.hpp"
#include "alvtts/corpus/types.hpp"
#include "alvtts/error.hpp"
#include "alvtts/nn/layers.hpp"
#include "alvtts/nn/optim.hpp"

namespace alvtts::mdplbert {

using nn::Index;
using nn::Matrix;
using nn::Var;

/// Token layout: <pad>, <mask>, dialect tokens, phoneme tokens. Grapheme ids index `words`.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;

  Vocabulary() = default;
  Vocabulary(std::vector<std::string> dialects, std::vector<std::string> phonemes, std::vector<std::string> words)
      : dialects_(std::move(dialects)), phonemes_(std::move(phonemes)), words_(std::move(words)) {
    require(!dialects_.empty() && !phonemes_.empty(), ErrorKind::kConfig, "vocabulary needs dialects and phonemes");
    tokens_ = {"<pad>", "<mask>"};
    for (const auto& d : dialects_) tokens_.push_back("<" + d + ">");
    for (const auto& p : phonemes_) tokens_.push_back(p);
    for (std::size_t i = 0; i < dialects_.size(); ++i) dialect_ids_[dialects_[i]] = dialect_offset() + static_cast<int>(i);
    for (std::size_t i = 0; i < phonemes_.size(); ++i) phoneme_ids_[phonemes_[i]] = phoneme_offset() + static_cast<int>(i);
    for (std::size_t i = 0; i < words_.size(); ++i) word_ids_[words_[i]] = static_cast<int>(i);
  }

  int dialect_offset() const { return 2; }
  int phoneme_offset() const { return 2 + static_cast<int>(dialects_.size()); }
  int size() const { return static_cast<int>(tokens_.size()); }
  int phoneme_count() const { return static_cast<int>(phonemes_.size()); }
  int word_count() const { return static_cast<int>(words_.size()); }

  int dialect_token(const corpus::DialectId& d) const {
    auto it = dialect_ids_.find(d.str());
    require(it != dialect_ids_.end(), ErrorKind::kVocabulary, "unknown dialect '" + d.str() + "'");
    return it->second;
  }
  int phoneme_token(const std::string& p) const {
    auto it = phoneme_ids_.find(p);
    require(it != phoneme_ids_.end(), ErrorKind::kVocabulary, "unknown phoneme '" + p + "'");
    return it->second;
  }
  int word_id(const std::string& w) const {
    auto it = word_ids_.find(w);
    require(it != word_ids_.end(), ErrorKind::kVocabulary, "unknown word '" + w + "'");
    return it->second;
  }
  bool is_phoneme_token(int token) const { return token >= phoneme_offset() && token < size(); }
  bool is_dialect_token(int token) const { return token >= dialect_offset() && token < phoneme_offset(); }
  /// Phoneme token -> class index of the masked-phoneme head.
  int phoneme_class(int token) const { return token - phoneme_offset(); }

  const std::vector<std::string>& dialects() const { return dialects_; }
  const std::vector<std::string>& phonemes() const { return phonemes_; }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& token_text(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  nlohmann::json to_json() const { return {{"dialects", dialects_}, {"phonemes", phonemes_}, {"words", words_}}; }
  static Vocabulary from_json(const nlohmann::json& j) {
    return Vocabulary(j.at("dialects").get<std::vector<std::string>>(), j.at("phonemes").get<std::vector<std::string>>(),
                      j.at("words").get<std::vector<std::string>>());
  }
  bool operator==(const Vocabulary& o) const {
    return dialects_ == o.dialects_ && phonemes_ == o.phonemes_ && words_ == o.words_;
  }

 private:
  std::vector<std::string> dialects_, phonemes_, words_, tokens_;
  std::map<std::string, int> dialect_ids_, phoneme_ids_, word_ids_;
};

/// Dialect token at position 0, then phoneme tokens. grapheme_ids[0] is kNoWord.
struct PhonemeTokenSequence {
  static constexpr int kNoWord = -1;
  std::vector<int> tokens;
  std::vector<int> grapheme_ids;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const PhonemeTokenSequence&) const = default;
};

struct WordSpan {
  corpus::PhonemeRange range;
  int word_id = 0;
};

inline PhonemeTokenSequence build_inputs(const std::vector<std::string>& phonemes, const corpus::DialectId& dialect,
                                         const std::vector<WordSpan>& word_spans, const Vocabulary& vocab) {
  PhonemeTokenSequence seq;
  seq.tokens.push_back(vocab.dialect_token(dialect));
  seq.grapheme_ids.push_back(PhonemeTokenSequence::kNoWord);
  int expected = 0;
  for (const auto& span : word_spans) {
    require(span.range.begin == expected && span.range.end > span.range.begin, ErrorKind::kAlignment,
            "word spans must partition the phoneme sequence");
    expected = span.range.end;
  }
  require(expected == static_cast<int>(phonemes.size()), ErrorKind::kAlignment,
          "word spans cover " + std::to_string(expected) + " of " + std::to_string(phonemes.size()) + " phonemes");
  for (const auto& span : word_spans)
    for (int p = span.range.begin; p < span.range.end; ++p) {
      seq.tokens.push_back(vocab.phoneme_token(phonemes[static_cast<std::size_t>(p)]));
      seq.grapheme_ids.push_back(span.word_id);
    }
  return seq;
}

/// Convenience: word spans and ids taken from the lexicon.
inline PhonemeTokenSequence build_inputs(const std::vector<std::string>& graphemes, const corpus::DialectId& dialect,
                                         const corpus::Lexicon& lexicon, const Vocabulary& vocab) {
  const auto phonemes = corpus::g2p_lookup(graphemes, lexicon);
  const auto ranges = corpus::word_ranges(graphemes, lexicon);
  std::vector<WordSpan> spans;
  for (std::size_t i = 0; i < graphemes.size(); ++i) spans.push_back({ranges[i], vocab.word_id(graphemes[i])});
  return build_inputs(phonemes, dialect, spans, vocab);
}

struct MaskingPolicy {
  double mask_ratio = 0.15;
  double replace_mask_prob = 0.8;
  double replace_random_prob = 0.1;
  double keep_prob = 0.1;
  std::uint64_t seed = 7;

  void validate() const {
    require(mask_ratio > 0.0 && mask_ratio < 1.0, ErrorKind::kConfig, "mask_ratio must lie in (0, 1)");
    require(replace_mask_prob >= 0 && replace_random_prob >= 0 && keep_prob >= 0, ErrorKind::kConfig,
            "masking probabilities must be nonnegative");
    require(std::abs(replace_mask_prob + replace_random_prob + keep_prob - 1.0) < 1e-9, ErrorKind::kConfig,
            "masking probabilities must sum to 1");
  }

  /// ceil(mask_ratio * maskable), guarded against floating-point overshoot.
  std::size_t selection_count(std::size_t maskable) const {
    return static_cast<std::size_t>(std::ceil(mask_ratio * static_cast<double>(maskable) - 1e-9));
  }
};

enum class MaskAction { kMask, kRandom, kKeep };

struct MaskedSequence {
  PhonemeTokenSequence sequence;  // after replacement
  std::vector<int> positions;     // selected positions, ascending
  std::vector<int> labels;        // original phoneme class at each position
  std::vector<MaskAction> actions;
};

/// Selects ceil(ratio * (len - 1)) non-dialect positions without replacement and
/// applies mask / random-phoneme / keep replacement. `stream` is consumed.
inline MaskedSequence apply_masking(const PhonemeTokenSequence& seq, const MaskingPolicy& policy,
                                    const Vocabulary& vocab, nn::Rng& stream) {
  policy.validate();
  require(seq.size() >= 2, ErrorKind::kShape, "masking needs at least one phoneme after the dialect token");
  MaskedSequence out;
  out.sequence = seq;
  std::vector<int> candidates(seq.size() - 1);
  for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i] = static_cast<int>(i + 1);
  const std::size_t count = std::min(candidates.size(), policy.selection_count(candidates.size()));
  // Partial Fisher-Yates: the first `count` entries become the selection.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(stream)]);
  }
  out.positions.assign(candidates.begin(), candidates.begin() + static_cast<long>(count));
  std::sort(out.positions.begin(), out.positions.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> random_phoneme(0, vocab.phoneme_count() - 1);
  for (int pos : out.positions) {
    const int original = seq.tokens[static_cast<std::size_t>(pos)];
    out.labels.push_back(vocab.phoneme_class(original));
    const double r = u(stream);
    auto& token = out.sequence.tokens[static_cast<std::size_t>(pos)];
    if (r < policy.replace_mask_prob) {
      token = Vocabulary::kMask;
      out.actions.push_back(MaskAction::kMask);
    } else if (r < policy.replace_mask_prob + policy.replace_random_prob) {
      token = vocab.phoneme_offset() + random_phoneme(stream);
      out.actions.push_back(MaskAction::kRandom);
    } else {
      out.actions.push_back(MaskAction::kKeep);
    }
  }
  return out;
}

struct BertConfig {
  int layers = 2;
  int heads = 2;
  int hidden = 64;
  int ff_width = 256;
  int max_length = 64;
  std::uint64_t seed = 31;

  void validate() const {
    require(layers >= 1 && heads >= 1 && hidden >= 1 && ff_width >= 1 && max_length >= 2, ErrorKind::kConfig,
            "BERT sizes must be positive");
    require(hidden % heads == 0, ErrorKind::kConfig, "BERT hidden width must divide into heads");
  }
  nlohmann::json to_json() const {
    return {{"layers", layers}, {"heads", heads}, {"hidden", hidden}, {"ff_width", ff_width},
            {"max_length", max_length}, {"seed", seed}};
  }
  static BertConfig from_json(const nlohmann::json& j) {
    BertConfig c;
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.hidden = j.at("hidden");
    c.ff_width = j.at("ff_width");
    c.max_length = j.at("max_length");
    c.seed = j.at("seed");
    return c;
  }
};

/// Transformer body shared by pre-training and the ALV predictor. Parameters
/// live under the "bert." prefix of the owning registry.
template <typename T>
class PhonemeBert {
 public:
  PhonemeBert() = default;
  PhonemeBert(nn::ParamRegistry<T>& reg, const BertConfig& config, int vocab_size, nn::Rng& rng) : config_(config) {
    config_.validate();
    token_embedding_ = nn::Embedding<T>(reg, "bert.token_embedding", vocab_size, config_.hidden, rng);
    position_embedding_ = nn::Embedding<T>(reg, "bert.position_embedding", config_.max_length, config_.hidden, rng);
    embedding_norm_ = nn::LayerNorm<T>(reg, "bert.embedding_norm", config_.hidden);
    for (int l = 0; l < config_.layers; ++l)
      blocks_.emplace_back(reg, "bert.layer" + std::to_string(l), config_.hidden, config_.heads, config_.ff_width, rng);
  }

  /// Final-layer representation of every position (L x hidden).
  Var<T> encode(const std::vector<int>& tokens) const {
    require(!tokens.empty(), ErrorKind::kShape, "encode needs at least the dialect token");
    require(static_cast<int>(tokens.size()) <= config_.max_length, ErrorKind::kLength,
            "sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_length " +
                std::to_string(config_.max_length));
    std::vector<int> positions(tokens.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
    Var<T> x = embedding_norm_(nn::add(token_embedding_(tokens), position_embedding_(positions)));
    for (const auto& block : blocks_) x = block(x);
    return x;
  }

  const BertConfig& config() const { return config_; }

 private:
  BertConfig config_;
  nn::Embedding<T> token_embedding_;
  nn::Embedding<T> position_embedding_;
  nn::LayerNorm<T> embedding_norm_;
  std::vector<nn::TransformerBlock<T>> blocks_;
};

template <typename T>
struct PretrainLoss {
  Var<T> masked_phoneme;
  Var<T> grapheme;
  Var<T> total;
};

/// Pre-training model: body plus masked-phoneme and grapheme heads.
template <typename T = float>
class MdPlBert {
 public:
  MdPlBert(BertConfig config, Vocabulary vocab) : vocab_(std::move(vocab)) {
    nn::Rng rng(config.seed);
    body_ = PhonemeBert<T>(params_, config, vocab_.size(), rng);
    phoneme_head_ = nn::Linear<T>(params_, "mlm_head", config.hidden, vocab_.phoneme_count(), rng);
    grapheme_head_ = nn::Linear<T>(params_, "grapheme_head", config.hidden, std::max(1, vocab_.word_count()), rng);
  }

  Var<T> encode_text(const PhonemeTokenSequence& seq) const { return body_.encode(seq.tokens); }

  /// Masked-phoneme CE over selected positions and grapheme CE over every
  /// non-dialect position, each averaged over the batch's positions.
  PretrainLoss<T> loss(const std::vector<MaskedSequence>& batch) const {
    std::vector<Var<T>> mlm_terms, graph_terms;
    std::size_t mlm_count = 0, graph_count = 0;
    for (const auto& item : batch) {
      require(item.positions.size() == item.labels.size(), ErrorKind::kShape, "mask labels misaligned with positions");
      require(item.sequence.grapheme_ids.size() == item.sequence.tokens.size(), ErrorKind::kShape,
              "grapheme ids misaligned with tokens");
      Var<T> h = body_.encode(item.sequence.tokens);
      if (!item.positions.empty()) {
        Var<T> logits = phoneme_head_(h);
        mlm_terms.push_back(nn::scale(nn::cross_entropy_rows(logits, item.positions, item.labels),
                                      static_cast<T>(item.positions.size())));
        mlm_count += item.positions.size();
      }
      std::vector<int> rows, targets;
      for (std::size_t i = 1; i < item.sequence.tokens.size(); ++i)
        if (item.sequence.grapheme_ids[i] != PhonemeTokenSequence::kNoWord) {
          rows.push_back(static_cast<int>(i));
          targets.push_back(item.sequence.grapheme_ids[i]);
        }
      if (!rows.empty()) {
        Var<T> logits = grapheme_head_(h);
        graph_terms.push_back(nn::scale(nn::cross_entropy_rows(logits, rows, targets), static_cast<T>(rows.size())));
        graph_count += rows.size();
      }
    }
    auto reduce = [](const std::vector<Var<T>>& terms, std::size_t count) {
      if (terms.empty()) return Var<T>::scalar(T(0));
      Var<T> acc = terms.front();
      for (std::size_t i = 1; i < terms.size(); ++i) acc = nn::add(acc, terms[i]);
      return nn::scale(acc, T(1) / static_cast<T>(count));
    };
    PretrainLoss<T> out;
    out.masked_phoneme = reduce(mlm_terms, mlm_count);
    out.grapheme = reduce(graph_terms, graph_count);
    out.total = nn::add(out.masked_phoneme, out.grapheme);
    return out;
  }

  const Vocabulary& vocab() const { return vocab_; }
  const BertConfig& config() const { return body_.config(); }
  nn::ParamRegistry<T>& params() { return params_; }
  const nn::ParamRegistry<T>& params() const { return params_; }
  nn::Linear<T>& phoneme_head() { return phoneme_head_; }

  Checkpoint to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.module = "bert";
    ckpt.config = {{"bert", config().to_json()}, {"vocab", vocab_.to_json()}};
    ckpt.tensors = params_.export_float();
    return ckpt;
  }

  static MdPlBert from_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.module == "bert", ErrorKind::kFormat, "not a bert checkpoint");
    MdPlBert m(BertConfig::from_json(ckpt.config.at("bert")), Vocabulary::from_json(ckpt.config.at("vocab")));
    m.params_.import_float(ckpt.tensors);
    return m;
  }

 private:
  Vocabulary vocab_;
  nn::ParamRegistry<T> params_;
  PhonemeBert<T> body_;
  nn::Linear<T> phoneme_head_;
  nn::Linear<T> grapheme_head_;
};

// ---------------------------------------------------------------------------
// Text corpus: one sentence per line, `dialect \t graphemes \t phonemes`.

struct TextCorpusEntry {
  corpus::DialectId dialect;
  std::vector<std::string> graphemes;
  std::vector<std::string> phonemes;
  bool operator==(const TextCorpusEntry&) const = default;
};

inline std::string format_text_corpus_line(const TextCorpusEntry& e) {
  return e.dialect.str() + '\t' + corpus::join(e.graphemes) + '\t' + corpus::join(e.phonemes);
}

inline TextCorpusEntry parse_text_corpus_line(const std::string& line, std::size_t line_no) {
  const auto f = corpus::split_on(line, '\t');
  const std::string where = "text corpus line " + std::to_string(line_no);
  require(f.size() == 3, ErrorKind::kParse, where + ": expected 3 tab-separated fields");
  require(!f[0].empty(), ErrorKind::kParse, where + ": empty dialect");
  TextCorpusEntry e{corpus::DialectId(f[0]), corpus::split_ws(f[1]), corpus::split_ws(f[2])};
  require(!e.phonemes.empty(), ErrorKind::kParse, where + ": no phonemes");
  return e;
}

inline std::vector<TextCorpusEntry> parse_text_corpus(std::istream& in) {
  std::vector<TextCorpusEntry> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(parse_text_corpus_line(line, n));
  }
  return out;
}

inline std::vector<TextCorpusEntry> load_text_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kConfig, "cannot open text corpus " + path.string());
  return parse_text_corpus(in);
}

inline void save_text_corpus(const std::vector<TextCorpusEntry>& entries, const std::filesystem::path& path) {
  std::string text;
  for (const auto& e : entries) text += format_text_corpus_line(e) + '\n';
  write_file_bytes(path, text);
}

// ---------------------------------------------------------------------------
// Pre-training loop

struct PretrainOptions {
  long iterations = 1000;
  long warmup_steps = 200;
  double learning_rate = 5e-4;
  int batch_size = 16;
  MaskingPolicy masking;
  std::uint64_t seed = 11;
};

struct PretrainReport {
  std::vector<double> total_loss;  // per step
  std::vector<double> masked_phoneme_loss;
  std::vector<double> grapheme_loss;
};

/// Uniformly shuffled epochs over `sequences`; masking uses a fresh stream per (step, item).
template <typename T>
PretrainReport pretrain(MdPlBert<T>& model, const std::vector<PhonemeTokenSequence>& sequences,
                        const PretrainOptions& options) {
  require(!sequences.empty() || options.iterations == 0, ErrorKind::kConfig, "pre-training corpus is empty");
  PretrainReport report;
  nn::Adam<T> optimizer(model.params());
  nn::LinearWarmupSchedule schedule{options.learning_rate, options.warmup_steps, options.iterations};
  nn::Rng order_rng(options.seed);
  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  for (long step = 1; step <= options.iterations; ++step) {
    std::vector<MaskedSequence> batch;
    for (int b = 0; b < options.batch_size; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      nn::Rng stream(options.masking.seed * 1000003ULL + static_cast<std::uint64_t>(step) * 131ULL +
                     static_cast<std::uint64_t>(b));
      batch.push_back(apply_masking(sequences[order[cursor++]], options.masking, model.vocab(), stream));
    }
    auto loss = model.loss(batch);
    require(std::isfinite(static_cast<double>(loss.total.item())), ErrorKind::kNumeric,
            "pre-training loss diverged at step " + std::to_string(step));
    report.total_loss.push_back(loss.total.item());
    report.masked_phoneme_loss.push_back(loss.masked_phoneme.item());
    report.grapheme_loss.push_back(loss.grapheme.item());
    nn::backward(loss.total);
    optimizer.step(schedule(step));
  }
  return report;
}

}  // namespace alvtts::mdplbert
