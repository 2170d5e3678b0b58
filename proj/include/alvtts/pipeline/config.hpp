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

// Run configuration: one JSON document with a section per module. Every key is
// optional; missing keys take the defaults below, unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "alvtts/augment/augment.hpp"
#include "alvtts/backbone/backbone.hpp"
#include "alvtts/checkpoint.hpp"
#include "alvtts/corpus/synthetic.hpp"
#include "alvtts/error.hpp"
#include "alvtts/mdplbert/mdplbert.hpp"
#include "alvtts/quantizer/quantizer.hpp"

namespace alvtts::pipeline {

using nlohmann::json;

struct StageSchedule {
  long iterations = 1000;
  double learning_rate = 1e-3;
  int batch_size = 16;
};

struct TrainingConfig {
  long warmup_steps = 200;
  StageSchedule stage1{3000, 1e-3, 8};
  StageSchedule bert{1000, 5e-4, 16};
  StageSchedule stage2{1000, 1e-3, 16};
  long stage2_eval_every = 50;
  long log_every = 50;
};

struct FeaturesConfig {
  std::string provider = "f0";  // f0 | external
  int channel = 0;              // log-F0 channel of the feature files
  int external_dims = 0;        // width of external features
};

struct BackboneSection {
  int width = 256;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 2;
  int ff_width = 512;
  int variance_width = 256;
  std::uint64_t seed = 23;
};

struct AugmentSection {
  std::string backend = "rule";  // rule | remote
  std::string substitution_table;  // rule backend; empty = identity
  bool translate = true;         // false: single-dialect text corpus
  std::string source_dialect;    // empty = first corpus dialect
  std::string target_dialect;    // empty = second corpus dialect
  augment::RemoteOptions remote;
  int max_in_flight = 4;
  int max_attempts = 3;
  double initial_backoff_seconds = 1.0;
};

struct EvaluationConfig {
  std::string cd_speaker;  // empty = first speaker
  std::string cd_dialect;  // empty = the dialect that speaker does not speak
  int max_test_utterances = 0;  // 0 = whole test split
  double calibration_fraction = 0.1;  // of the training split
};

struct PathsConfig {
  std::filesystem::path work_dir = "run";

  std::filesystem::path corpus_dir() const { return work_dir / "corpus"; }
  std::filesystem::path text_corpus() const { return work_dir / "text" / "text_corpus.tsv"; }
  std::filesystem::path translations() const { return work_dir / "text" / "translations.jsonl"; }
  std::filesystem::path audit_log() const { return work_dir / "text" / "augment_audit.jsonl"; }
  std::filesystem::path checkpoint_dir() const { return work_dir / "checkpoints"; }
  std::filesystem::path quantizer() const { return checkpoint_dir() / "quantizer.ckpt"; }
  std::filesystem::path backbone() const { return checkpoint_dir() / "backbone.ckpt"; }
  std::filesystem::path bert() const { return checkpoint_dir() / "bert.ckpt"; }
  std::filesystem::path predictor(bool from_scratch = false) const {
    return checkpoint_dir() / (from_scratch ? "predictor_scratch.ckpt" : "predictor.ckpt");
  }
  std::filesystem::path report_dir() const { return work_dir / "reports"; }
  std::filesystem::path eval_dir() const { return work_dir / "eval"; }
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string preset = "desk";
  PathsConfig paths;
  corpus::SyntheticCorpusConfig corpus;
  FeaturesConfig features;
  quantizer::EncoderConfig quantizer;
  BackboneSection backbone;
  mdplbert::BertConfig bert;
  mdplbert::MaskingPolicy masking;
  std::uint64_t predictor_seed = 13;
  AugmentSection augment;
  TrainingConfig training;
  EvaluationConfig evaluation;

  void validate() const;
  json to_json() const;
  /// SHA-256 of the canonical JSON form without the paths section, so a run
  /// relocated to another directory keeps its hash.
  std::string hash() const {
    json j = to_json();
    j.erase("paths");
    return sha256_hex(j.dump());
  }
};

/// Preset budgets: "desk" (CPU-scale) or "full" (paper-scale iteration counts).
inline RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") return c;
  require(name == "full", ErrorKind::kConfig, "unknown preset '" + name + "' (expected desk or full)");
  c.training.warmup_steps = 4000;
  c.training.stage1.iterations = 100000;
  c.training.stage2.iterations = 10000;
  c.training.bert.iterations = 100000;
  return c;
}

namespace detail {

/// Reads keys from one JSON object, remembering which were consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    require(j_.is_object(), ErrorKind::kConfig, "config section '" + name_ + "' must be an object");
  }
  ~Section() = default;

  template <typename V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception& e) {
      fail(ErrorKind::kConfig, "config key " + name_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      require(seen_.count(k) > 0, ErrorKind::kConfig, "unknown config key " + name_ + "." + k);
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

inline void read_schedule(Section& parent, const char* key, const std::string& path, StageSchedule& s) {
  if (!parent.has(key)) return;
  Section sec(parent.at(key), path);
  sec.get("iterations", s.iterations);
  sec.get("learning_rate", s.learning_rate);
  sec.get("batch_size", s.batch_size);
  sec.finish();
}

inline json schedule_json(const StageSchedule& s) {
  return {{"iterations", s.iterations}, {"learning_rate", s.learning_rate}, {"batch_size", s.batch_size}};
}

}  // namespace detail

inline RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  detail::Section root(j, "<root>");
  std::string preset = "desk";
  root.get("preset", preset);
  RunConfig c = preset_config(preset);
  root.get("seed", c.seed);

  if (root.has("paths")) {
    detail::Section s(j.at("paths"), "paths");
    std::string work = c.paths.work_dir.string();
    s.get("work_dir", work);
    c.paths.work_dir = work;
    s.finish();
  }
  if (c.paths.work_dir.is_relative() && !base_dir.empty()) c.paths.work_dir = base_dir / c.paths.work_dir;

  if (root.has("corpus")) {
    detail::Section s(j.at("corpus"), "corpus");
    auto& k = c.corpus;
    s.get("lexicon_size", k.lexicon_size);
    s.get("sentence_count", k.sentence_count);
    s.get("min_words", k.min_words);
    s.get("max_words", k.max_words);
    s.get("divergent_fraction", k.divergent_fraction);
    s.get("frame_rate", k.frame_rate);
    s.get("high_logf0", k.high_logf0);
    s.get("low_logf0", k.low_logf0);
    s.get("noise_std", k.noise_std);
    s.get("declination_per_second", k.declination_per_second);
    s.get("spectral_dim", k.spectral_dim);
    s.get("seed", k.seed);
    if (s.has("speakers")) {
      k.speakers.clear();
      for (const auto& sp : j.at("corpus").at("speakers")) {
        detail::Section ss(sp, "corpus.speakers[]");
        std::string id, dialect;
        corpus::SpeakerSpec spec;
        ss.get("speaker_id", id);
        ss.get("dialect", dialect);
        ss.get("log_f0_offset", spec.log_f0_offset);
        ss.get("duration_scale", spec.duration_scale);
        ss.finish();
        require(!id.empty() && !dialect.empty(), ErrorKind::kConfig, "speakers need speaker_id and dialect");
        spec.speaker_id = id;
        spec.dialect = corpus::DialectId(dialect);
        k.speakers.push_back(spec);
      }
    }
    s.finish();
  }
  if (root.has("features")) {
    detail::Section s(j.at("features"), "features");
    s.get("provider", c.features.provider);
    s.get("channel", c.features.channel);
    s.get("external_dims", c.features.external_dims);
    s.finish();
  }
  if (root.has("quantizer")) {
    detail::Section s(j.at("quantizer"), "quantizer");
    s.get("width", c.quantizer.width);
    s.get("codebook_size", c.quantizer.codebook_size);
    s.get("beta", c.quantizer.beta);
    s.get("codebook_init", c.quantizer.codebook_init);
    s.get("seed", c.quantizer.seed);
    s.finish();
  }
  if (root.has("backbone")) {
    detail::Section s(j.at("backbone"), "backbone");
    auto& b = c.backbone;
    s.get("width", b.width);
    s.get("encoder_layers", b.encoder_layers);
    s.get("decoder_layers", b.decoder_layers);
    s.get("heads", b.heads);
    s.get("ff_width", b.ff_width);
    s.get("variance_width", b.variance_width);
    s.get("seed", b.seed);
    s.finish();
  }
  if (root.has("bert")) {
    detail::Section s(j.at("bert"), "bert");
    s.get("layers", c.bert.layers);
    s.get("heads", c.bert.heads);
    s.get("hidden", c.bert.hidden);
    s.get("ff_width", c.bert.ff_width);
    s.get("max_length", c.bert.max_length);
    s.get("seed", c.bert.seed);
    s.get("mask_ratio", c.masking.mask_ratio);
    s.get("replace_mask_prob", c.masking.replace_mask_prob);
    s.get("replace_random_prob", c.masking.replace_random_prob);
    s.get("keep_prob", c.masking.keep_prob);
    s.get("masking_seed", c.masking.seed);
    s.finish();
  }
  if (root.has("predictor")) {
    detail::Section s(j.at("predictor"), "predictor");
    s.get("seed", c.predictor_seed);
    s.finish();
  }
  if (root.has("augment")) {
    detail::Section s(j.at("augment"), "augment");
    auto& a = c.augment;
    s.get("backend", a.backend);
    s.get("substitution_table", a.substitution_table);
    s.get("translate", a.translate);
    s.get("source_dialect", a.source_dialect);
    s.get("target_dialect", a.target_dialect);
    s.get("max_in_flight", a.max_in_flight);
    s.get("max_attempts", a.max_attempts);
    s.get("initial_backoff_seconds", a.initial_backoff_seconds);
    if (s.has("remote")) {
      detail::Section r(j.at("augment").at("remote"), "augment.remote");
      r.get("base_url", a.remote.base_url);
      r.get("path", a.remote.path);
      r.get("model", a.remote.model);
      r.get("max_tokens", a.remote.max_tokens);
      r.get("timeout_seconds", a.remote.timeout_seconds);
      r.get("api_key_env", a.remote.api_key_env);
      std::string prompt = a.remote.prompt.text();
      r.get("prompt_template", prompt);
      a.remote.prompt = augment::PromptTemplate(prompt);
      r.finish();
    }
    s.finish();
  }
  if (root.has("training")) {
    detail::Section s(j.at("training"), "training");
    s.get("warmup_steps", c.training.warmup_steps);
    detail::read_schedule(s, "stage1", "training.stage1", c.training.stage1);
    detail::read_schedule(s, "bert", "training.bert", c.training.bert);
    detail::read_schedule(s, "stage2", "training.stage2", c.training.stage2);
    s.get("stage2_eval_every", c.training.stage2_eval_every);
    s.get("log_every", c.training.log_every);
    s.finish();
  }
  if (root.has("evaluation")) {
    detail::Section s(j.at("evaluation"), "evaluation");
    s.get("cd_speaker", c.evaluation.cd_speaker);
    s.get("cd_dialect", c.evaluation.cd_dialect);
    s.get("max_test_utterances", c.evaluation.max_test_utterances);
    s.get("calibration_fraction", c.evaluation.calibration_fraction);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kConfig, "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

inline void RunConfig::validate() const {
  corpus.validate();
  quantizer.validate();
  bert.validate();
  masking.validate();
  require(features.provider == "f0" || features.provider == "external", ErrorKind::kConfig,
          "features.provider must be f0 or external");
  require(features.provider == "f0" || features.external_dims >= 1, ErrorKind::kConfig,
          "external features need external_dims >= 1");
  require(quantizer.width == backbone.width, ErrorKind::kConfig,
          "quantizer.width must equal backbone.width (the codebook is the ALV embedding table)");
  require(backbone.width % backbone.heads == 0, ErrorKind::kConfig, "backbone.width must divide into heads");
  for (const StageSchedule* s : {&training.stage1, &training.bert, &training.stage2}) {
    require(s->iterations >= 0, ErrorKind::kConfig, "iteration counts must be nonnegative");
    require(s->learning_rate > 0.0, ErrorKind::kConfig, "stage learning rates must be positive");
    require(s->batch_size >= 1, ErrorKind::kConfig, "batch sizes must be positive");
  }
  require(training.warmup_steps >= 0, ErrorKind::kConfig, "warmup_steps must be nonnegative");
  require(training.stage2_eval_every >= 1 && training.log_every >= 1, ErrorKind::kConfig,
          "evaluation and logging intervals must be positive");
  require(augment.backend == "rule" || augment.backend == "remote", ErrorKind::kConfig,
          "augment.backend must be rule or remote");
  require(augment.max_in_flight >= 1 && augment.max_attempts >= 1, ErrorKind::kConfig,
          "augment concurrency and attempts must be positive");
  require(evaluation.calibration_fraction > 0.0 && evaluation.calibration_fraction < 1.0, ErrorKind::kConfig,
          "evaluation.calibration_fraction must lie in (0, 1)");
  require(evaluation.max_test_utterances >= 0, ErrorKind::kConfig, "max_test_utterances must be nonnegative");
  require(!paths.work_dir.empty(), ErrorKind::kConfig, "paths.work_dir is required");
}

inline json RunConfig::to_json() const {
  json speakers = json::array();
  for (const auto& s : corpus.speakers)
    speakers.push_back({{"speaker_id", s.speaker_id},
                        {"dialect", s.dialect.str()},
                        {"log_f0_offset", s.log_f0_offset},
                        {"duration_scale", s.duration_scale}});
  return {
      {"preset", preset},
      {"seed", seed},
      {"paths", {{"work_dir", paths.work_dir.string()}}},
      {"corpus",
       {{"lexicon_size", corpus.lexicon_size},
        {"sentence_count", corpus.sentence_count},
        {"min_words", corpus.min_words},
        {"max_words", corpus.max_words},
        {"divergent_fraction", corpus.divergent_fraction},
        {"frame_rate", corpus.frame_rate},
        {"high_logf0", corpus.high_logf0},
        {"low_logf0", corpus.low_logf0},
        {"noise_std", corpus.noise_std},
        {"declination_per_second", corpus.declination_per_second},
        {"spectral_dim", corpus.spectral_dim},
        {"seed", corpus.seed},
        {"speakers", speakers}}},
      {"features",
       {{"provider", features.provider}, {"channel", features.channel}, {"external_dims", features.external_dims}}},
      {"quantizer",
       {{"width", quantizer.width},
        {"codebook_size", quantizer.codebook_size},
        {"beta", quantizer.beta},
        {"codebook_init", quantizer.codebook_init},
        {"seed", quantizer.seed}}},
      {"backbone",
       {{"width", backbone.width},
        {"encoder_layers", backbone.encoder_layers},
        {"decoder_layers", backbone.decoder_layers},
        {"heads", backbone.heads},
        {"ff_width", backbone.ff_width},
        {"variance_width", backbone.variance_width},
        {"seed", backbone.seed}}},
      {"bert",
       {{"layers", bert.layers},
        {"heads", bert.heads},
        {"hidden", bert.hidden},
        {"ff_width", bert.ff_width},
        {"max_length", bert.max_length},
        {"seed", bert.seed},
        {"mask_ratio", masking.mask_ratio},
        {"replace_mask_prob", masking.replace_mask_prob},
        {"replace_random_prob", masking.replace_random_prob},
        {"keep_prob", masking.keep_prob},
        {"masking_seed", masking.seed}}},
      {"predictor", {{"seed", predictor_seed}}},
      {"augment",
       {{"backend", augment.backend},
        {"substitution_table", augment.substitution_table},
        {"translate", augment.translate},
        {"source_dialect", augment.source_dialect},
        {"target_dialect", augment.target_dialect},
        {"max_in_flight", augment.max_in_flight},
        {"max_attempts", augment.max_attempts},
        {"initial_backoff_seconds", augment.initial_backoff_seconds},
        {"remote",
         {{"base_url", augment.remote.base_url},
          {"path", augment.remote.path},
          {"model", augment.remote.model},
          {"max_tokens", augment.remote.max_tokens},
          {"timeout_seconds", augment.remote.timeout_seconds},
          {"api_key_env", augment.remote.api_key_env},
          {"prompt_template", augment.remote.prompt.text()}}}}},
      {"training",
       {{"warmup_steps", training.warmup_steps},
        {"stage1", detail::schedule_json(training.stage1)},
        {"bert", detail::schedule_json(training.bert)},
        {"stage2", detail::schedule_json(training.stage2)},
        {"stage2_eval_every", training.stage2_eval_every},
        {"log_every", training.log_every}}},
      {"evaluation",
       {{"cd_speaker", evaluation.cd_speaker},
        {"cd_dialect", evaluation.cd_dialect},
        {"max_test_utterances", evaluation.max_test_utterances},
        {"calibration_fraction", evaluation.calibration_fraction}}}};
}

}  // namespace alvtts::pipeline
