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

// evaluate: objective metrics over the test split, written as one JSON summary
// plus plot-ready files. Blocks whose inputs are missing are marked skipped.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alvtts/evalkit/evalkit.hpp"
#include "alvtts/pipeline/stages.hpp"

namespace alvtts::pipeline {

inline json skipped(const std::string& reason) { return {{"status", "skipped"}, {"reason", reason}}; }

inline std::vector<bool> divergent_mask(const std::vector<std::string>& graphemes, const corpus::Lexicon& lexicon,
                                        const std::set<std::string>& divergent) {
  std::vector<bool> mask;
  for (const auto& w : graphemes)
    for (int m = 0; m < lexicon.at(w).morae; ++m) mask.push_back(divergent.count(w) > 0);
  return mask;
}

inline std::vector<double> log_f0_track(const nn::Matrix<float>& frames) {
  std::vector<double> out(static_cast<std::size_t>(frames.rows()));
  for (Eigen::Index t = 0; t < frames.rows(); ++t) out[static_cast<std::size_t>(t)] = frames(t, 0);
  return out;
}

inline json accuracy_json(const evalkit::AccuracyResult& r) {
  return {{"accuracy", r.accuracy}, {"matched", r.matched}, {"total", r.total}};
}

struct EvaluationInputs {
  const CorpusContext& ctx;
  const Stage1Models* stage1 = nullptr;
  const Predictor* predictor = nullptr;
  std::vector<std::size_t> test;
};

/// Reference-encoder ALVs against oracle accents of each utterance's own dialect.
inline std::vector<evalkit::OracleSample> id_samples(const EvaluationInputs& in, const std::vector<std::size_t>& indices) {
  std::vector<evalkit::OracleSample> out;
  const auto& lex = in.ctx.bundle->lexicon;
  for (std::size_t i : indices) {
    const auto& u = in.ctx.utt(i);
    require(u.oracle_accent.has_value(), ErrorKind::kInput, "missing oracle labels for " + u.utt_id);
    out.push_back({quantizer::extract_alv(u, *in.ctx.provider, in.stage1->encoder), corpus::mora_ranges(u.graphemes, lex),
                   *u.oracle_accent, {}});
  }
  return out;
}

inline json evaluate_cd(const RunConfig& cfg, const EvaluationInputs& in, const evalkit::ClassMapping& mapping) {
  const auto& b = *in.ctx.bundle;
  const auto& bb = in.stage1->backbone;
  const std::string speaker = cfg.evaluation.cd_speaker.empty() ? bb.config().speakers.front() : cfg.evaluation.cd_speaker;
  bb.speaker_id(speaker);
  std::optional<corpus::DialectId> native;
  for (const auto& u : b.manifest)
    if (u.speaker_id == speaker) native = u.dialect;
  require(native.has_value(), ErrorKind::kConfig, "speaker " + speaker + " has no utterances");
  std::string dialect = cfg.evaluation.cd_dialect;
  if (dialect.empty())
    for (const auto& d : b.dialects)
      if (d != *native) {
        dialect = d.str();
        break;
      }
  require(!dialect.empty(), ErrorKind::kConfig, "no cross-dialect target for speaker " + speaker);
  const corpus::DialectId target(dialect);
  require(b.rule_tables.count(target) && b.rule_tables.count(*native), ErrorKind::kInput,
          "accent rule tables are required for the cross-dialect oracle");
  const auto divergent_list = corpus::divergent_words(b.rule_tables.at(*native), b.rule_tables.at(target));
  const std::set<std::string> divergent(divergent_list.begin(), divergent_list.end());

  std::vector<evalkit::OracleSample> samples;
  std::vector<std::string> oracle, baseline, synthesized;
  std::vector<std::vector<bool>> masks;
  for (std::size_t i : in.test) {
    const auto& u = b.manifest[i];
    if (u.speaker_id != speaker) continue;
    const auto morae = corpus::mora_ranges(u.graphemes, b.lexicon);
    const auto pattern = b.rule_tables.at(target).sentence_pattern(u.graphemes);
    const auto mask = divergent_mask(u.graphemes, b.lexicon, divergent);
    const auto alvs = in.predictor->predict(u.graphemes, target, b.lexicon).alvs;
    samples.push_back({alvs, morae, pattern, mask});
    const auto none = synthesize(bb, u.phonemes, speaker, std::nullopt);
    baseline.push_back(evalkit::implied_accent(log_f0_track(none.frames), none.durations, morae));
    const auto ap = synthesize(bb, u.phonemes, speaker, alvs);
    synthesized.push_back(evalkit::implied_accent(log_f0_track(ap.frames), ap.durations, morae));
    oracle.push_back(pattern);
    masks.push_back(mask);
  }
  const auto acc = evalkit::alv_oracle_accuracy(samples, mapping);
  const auto base = evalkit::pattern_accuracy(baseline, oracle, masks);
  const auto synth = evalkit::pattern_accuracy(synthesized, oracle, masks);
  return {{"status", "ok"},
          {"speaker", speaker},
          {"native_dialect", native->str()},
          {"target_dialect", dialect},
          {"utterances", samples.size()},
          {"divergent_words", divergent_list.size()},
          {"predicted_alv", accuracy_json(acc)},
          {"synthesized_implied", accuracy_json(synth)},
          {"no_alv_baseline_implied", accuracy_json(base)},
          {"margin_over_baseline", acc.accuracy - base.accuracy}};
}

inline json evaluate_logf0(const RunConfig& cfg, const EvaluationInputs& in, std::vector<std::vector<int>>* extracted) {
  const auto& b = *in.ctx.bundle;
  const int classes = in.stage1->encoder.config().codebook_size;
  std::vector<evalkit::AlvF0Sample> samples;
  for (std::size_t k = 0; k < in.test.size(); ++k) {
    const auto& u = b.manifest[in.test[k]];
    const auto frames = in.ctx.frames(in.test[k]);
    evalkit::AlvF0Sample s;
    s.alvs = (*extracted)[k];
    s.alignment = u.alignment;
    s.log_f0 = log_f0_track(frames);
    for (double v : s.log_f0) s.voiced.push_back(std::isfinite(v) && v > 0.0);
    samples.push_back(std::move(s));
  }
  const auto r = evalkit::logf0_by_alv(samples, classes);
  std::filesystem::create_directories(cfg.paths.eval_dir());
  write_file_bytes(cfg.paths.eval_dir() / "logf0_points.csv", evalkit::format_points_csv(r));
  write_file_bytes(cfg.paths.eval_dir() / "logf0_stats.tsv", evalkit::format_stats_tsv(r));

  // Forced constant ALV class per run over the test texts.
  std::vector<std::pair<int, double>> forced;
  std::ostringstream forced_tsv;
  forced_tsv << "alv_class\tmean_log_f0\tframes\n";
  forced_tsv.precision(9);
  for (int k = 0; k < classes; ++k) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i : in.test) {
      const auto& u = b.manifest[i];
      const auto out = synthesize(in.stage1->backbone, u.phonemes, u.speaker_id, std::vector<int>(u.phonemes.size(), k));
      for (Eigen::Index t = 0; t < out.frames.rows(); ++t) sum += out.frames(t, 0);
      n += static_cast<std::size_t>(out.frames.rows());
    }
    forced.emplace_back(k, n ? sum / static_cast<double>(n) : 0.0);
    forced_tsv << k << '\t' << forced.back().second << '\t' << n << '\n';
  }
  write_file_bytes(cfg.paths.eval_dir() / "forced_alv_means.tsv", forced_tsv.str());
  const auto forced_order = evalkit::increasing_ordering(forced);

  json classes_json = json::array();
  for (const auto& c : r.classes)
    classes_json.push_back({{"alv", c.alv}, {"count", c.count}, {"mean", c.mean}, {"std", c.std},
                            {"q1", c.q1}, {"median", c.median}, {"q3", c.q3}});
  json forced_json = json::array();
  for (const auto& [k, m] : forced) forced_json.push_back({{"alv", k}, {"mean_log_f0", m}});
  return {{"status", "ok"},
          {"classes", classes_json},
          {"excluded_phonemes", r.excluded_phonemes},
          {"ordering_exists", r.ordering.exists},
          {"min_gap", r.ordering.min_gap},
          {"order", r.ordering.order},
          {"forced_synthesis",
           {{"class_means", forced_json},
            {"ordering_exists", forced_order.exists},
            {"min_gap", forced_order.min_gap},
            {"order", forced_order.order}}},
          {"points_file", "logf0_points.csv"},
          {"stats_file", "logf0_stats.tsv"}};
}

inline json evaluate_similarity(const EvaluationInputs& in, const std::vector<std::vector<int>>& extracted) {
  const auto& b = *in.ctx.bundle;
  const auto& bb = in.stage1->backbone;
  const evalkit::ProsodyStatsEmbedder embedder;
  json per_speaker = json::object();
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& speaker : bb.config().speakers) {
    std::vector<Eigen::VectorXd> refs;
    for (std::size_t i : in.ctx.split.train)
      if (b.manifest[i].speaker_id == speaker)
        refs.push_back(embedder.embed({in.ctx.frames(i), b.manifest[i].alignment.durations()}));
    if (refs.empty()) continue;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < in.test.size(); ++k) {
      const auto& u = b.manifest[in.test[k]];
      if (u.speaker_id != speaker) continue;
      std::vector<int> alvs = in.predictor ? in.predictor->predict(u.graphemes, u.dialect, b.lexicon).alvs : extracted[k];
      const auto out = synthesize(bb, u.phonemes, speaker, alvs);
      sum += evalkit::speaker_similarity(embedder.embed({out.frames, out.durations}), refs);
      ++n;
    }
    if (n == 0) continue;
    per_speaker[speaker] = {{"mean", sum / static_cast<double>(n)}, {"utterances", n}};
    total += sum;
    count += n;
  }
  return {{"status", count ? "ok" : "skipped"},
          {"embedder", "prosody_stats"},
          {"alv_source", in.predictor ? "predicted" : "reference"},
          {"per_speaker", per_speaker},
          {"mean", count ? total / static_cast<double>(count) : 0.0}};
}

inline json evaluate_bleu(const RunConfig& cfg) {
  if (!std::filesystem::exists(cfg.paths.translations())) return skipped("no translations");
  std::ifstream in(cfg.paths.translations());
  const auto records = augment::parse_translation_records(in);
  std::vector<evalkit::Tokens> candidates;
  std::vector<std::vector<evalkit::Tokens>> references;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    candidates.push_back(corpus::split_ws(*r.translated));
    references.push_back({corpus::split_ws(r.original)});
  }
  if (candidates.empty()) return skipped("no successful translations");
  const auto r = evalkit::bleu4_detail(candidates, references);
  return {{"status", "ok"},
          {"score", r.score},
          {"brevity_penalty", r.brevity_penalty},
          {"precisions", r.precisions},
          {"sentences", candidates.size()}};
}

/// Runs every metric whose inputs exist and writes eval/metrics.json.
inline json cmd_evaluate(const RunConfig& cfg, std::ostream* log = nullptr) {
  const auto ctx = load_corpus_context(cfg);
  json metrics;
  metrics["config_hash"] = cfg.hash();
  metrics["seeds"] = {{"run", cfg.seed},          {"corpus", cfg.corpus.seed},  {"quantizer", cfg.quantizer.seed},
                      {"backbone", cfg.backbone.seed}, {"bert", cfg.bert.seed}, {"masking", cfg.masking.seed},
                      {"predictor", cfg.predictor_seed}};
  metrics["corpus"] = {{"manifest", ctx.manifest_hash},
                       {"utterances", ctx.bundle->manifest.size()},
                       {"train", ctx.split.train.size()},
                       {"validation", ctx.split.validation.size()},
                       {"test", ctx.split.test.size()},
                       {"calibration", ctx.calibration.size()}};

  std::optional<Stage1Models> stage1;
  if (std::filesystem::exists(cfg.paths.quantizer()) && std::filesystem::exists(cfg.paths.backbone()))
    stage1.emplace(load_stage1(cfg, ctx.manifest_hash));
  std::optional<Predictor> predictor;
  if (stage1 && std::filesystem::exists(cfg.paths.predictor(false))) predictor.emplace(load_predictor(cfg, false, *stage1));

  EvaluationInputs in{ctx, stage1 ? &*stage1 : nullptr, predictor ? &*predictor : nullptr, ctx.split.test};
  if (cfg.evaluation.max_test_utterances > 0 && in.test.size() > static_cast<std::size_t>(cfg.evaluation.max_test_utterances))
    in.test.resize(static_cast<std::size_t>(cfg.evaluation.max_test_utterances));

  json checkpoints = json::object();
  if (stage1) checkpoints = {{"quantizer", stage1->quantizer_hash}, {"backbone", stage1->backbone_hash}};
  if (predictor) checkpoints["predictor"] = file_sha256(cfg.paths.predictor(false));
  metrics["checkpoints"] = checkpoints;

  const bool has_oracle = !ctx.bundle->manifest.empty() && ctx.bundle->manifest.front().oracle_accent.has_value();
  if (!stage1) {
    metrics["alv_oracle_accuracy"] = {{"id", skipped("stage-1 checkpoints missing")},
                                      {"cd", skipped("stage-1 checkpoints missing")}};
    metrics["logf0_by_alv"] = skipped("stage-1 checkpoints missing");
    metrics["speaker_similarity"] = skipped("stage-1 checkpoints missing");
  } else {
    std::vector<std::vector<int>> extracted;
    for (std::size_t i : in.test) extracted.push_back(quantizer::extract_alv(ctx.utt(i), *ctx.provider, stage1->encoder));
    if (has_oracle) {
      const int classes = stage1->encoder.config().codebook_size;
      const auto mapping = evalkit::fit_optimal_mapping(id_samples(in, ctx.calibration), classes);
      const auto id = evalkit::alv_oracle_accuracy(id_samples(in, in.test), mapping);
      json id_json = accuracy_json(id);
      id_json["status"] = "ok";
      id_json["mapping"] = mapping.describe();
      id_json["utterances"] = in.test.size();
      std::vector<long> usage(static_cast<std::size_t>(classes), 0);
      for (const auto& a : extracted)
        for (int k : a) ++usage[static_cast<std::size_t>(k)];
      id_json["test_codebook_perplexity"] = quantizer::codebook_perplexity(usage);
      metrics["alv_oracle_accuracy"]["id"] = id_json;
      metrics["alv_oracle_accuracy"]["cd"] = predictor ? evaluate_cd(cfg, in, mapping) : skipped("predictor checkpoint missing");
    } else {
      metrics["alv_oracle_accuracy"] = {{"id", skipped("corpus has no oracle accents")},
                                        {"cd", skipped("corpus has no oracle accents")}};
    }
    metrics["logf0_by_alv"] = evaluate_logf0(cfg, in, &extracted);
    metrics["speaker_similarity"] = evaluate_similarity(in, extracted);
  }
  metrics["bleu4"] = evaluate_bleu(cfg);

  json reports = json::object();
  for (bool scratch : {false, true}) {
    const auto path = predictor_report_path(cfg, scratch);
    const char* key = scratch ? "from_scratch" : "pretrained";
    if (std::filesystem::exists(path)) {
      const auto rep = json::parse(read_file_bytes(path));
      reports[key] = {{"status", "ok"},
                      {"validation_accuracy", rep.at("validation_accuracy")},
                      {"validation_loss", rep.at("validation_loss")},
                      {"best_step", rep.at("best_step")}};
    } else {
      reports[key] = skipped("no report");
    }
  }
  metrics["predictor_reports"] = reports;

  std::filesystem::create_directories(cfg.paths.eval_dir());
  write_json(cfg.paths.eval_dir() / "metrics.json", metrics);
  if (log) *log << "evaluate: wrote " << (cfg.paths.eval_dir() / "metrics.json").string() << '\n';
  return metrics;
}

}  // namespace alvtts::pipeline
