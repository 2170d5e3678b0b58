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

// Pipeline stages. Each stage reads its inputs from the run directory, checks
// the upstream checkpoint hashes it depends on, and writes its outputs back.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "alvtts/alvpredictor/alvpredictor.hpp"
#include "alvtts/augment/augment.hpp"
#include "alvtts/backbone/backbone.hpp"
#include "alvtts/backbone/render.hpp"
#include "alvtts/checkpoint.hpp"
#include "alvtts/corpus/feature_file.hpp"
#include "alvtts/corpus/manifest.hpp"
#include "alvtts/corpus/synthetic.hpp"
#include "alvtts/error.hpp"
#include "alvtts/features/features.hpp"
#include "alvtts/mdplbert/mdplbert.hpp"
#include "alvtts/nn/optim.hpp"
#include "alvtts/pipeline/config.hpp"
#include "alvtts/quantizer/quantizer.hpp"

namespace alvtts::pipeline {

using Encoder = quantizer::ReferenceEncoder<float>;
using Backbone = backbone::Backbone<float>;
using Bert = mdplbert::MdPlBert<float>;
using Predictor = alvpredictor::AlvPredictor<float>;

// ---------------------------------------------------------------------------
// Shared context

struct CorpusContext {
  std::shared_ptr<const corpus::CorpusBundle> bundle;
  corpus::CorpusSplit split;
  std::vector<std::size_t> calibration;  // subset of split.train
  std::string manifest_hash;
  std::shared_ptr<features::ProsodyProvider> provider;

  const corpus::Utterance& utt(std::size_t i) const { return bundle->manifest[i]; }
  corpus::FrameMatrix frames(std::size_t i) const { return bundle->read_features(bundle->manifest[i]); }
};

inline CorpusContext load_corpus_context(const RunConfig& cfg) {
  CorpusContext ctx;
  ctx.bundle = std::make_shared<const corpus::CorpusBundle>(corpus::load_corpus_directory(cfg.paths.corpus_dir()));
  ctx.manifest_hash = file_sha256(cfg.paths.corpus_dir() / "manifest.tsv");
  ctx.split = corpus::split_corpus(ctx.bundle->manifest, cfg.seed);
  std::vector<std::size_t> train = ctx.split.train;
  nn::Rng rng(cfg.seed ^ 0xca11b7a7eULL);
  std::shuffle(train.begin(), train.end(), rng);
  const auto n = static_cast<std::size_t>(std::ceil(cfg.evaluation.calibration_fraction * static_cast<double>(train.size())));
  ctx.calibration.assign(train.begin(), train.begin() + static_cast<long>(std::min(n, train.size())));
  std::sort(ctx.calibration.begin(), ctx.calibration.end());
  auto bundle = ctx.bundle;
  features::FrameLoader loader = [bundle](const corpus::Utterance& u) { return bundle->read_features(u); };
  if (cfg.features.provider == "f0")
    ctx.provider = std::make_shared<features::F0Provider>(loader, bundle->frame_rate, cfg.features.channel);
  else
    ctx.provider = std::make_shared<features::ExternalFeatureProvider>(loader, cfg.features.external_dims, bundle->frame_rate);
  return ctx;
}

inline std::vector<std::string> phoneme_vocabulary(const corpus::Lexicon& lexicon) {
  std::set<std::string> set;
  for (const auto& w : lexicon.words())
    for (const auto& p : lexicon.at(w).phonemes) set.insert(p);
  return {set.begin(), set.end()};
}

inline mdplbert::Vocabulary make_vocabulary(const corpus::CorpusBundle& bundle) {
  std::vector<std::string> dialects;
  for (const auto& d : bundle.dialects) dialects.push_back(d.str());
  return mdplbert::Vocabulary(dialects, phoneme_vocabulary(bundle.lexicon), bundle.lexicon.words());
}

inline std::vector<std::string> speaker_list(const std::vector<corpus::Utterance>& manifest) {
  std::vector<std::string> out;
  for (const auto& u : manifest)
    if (std::find(out.begin(), out.end(), u.speaker_id) == out.end()) out.push_back(u.speaker_id);
  return out;
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_file_bytes(path, j.dump(2) + "\n"); }

inline void require_checkpoint(const std::filesystem::path& path, const std::string& what) {
  require(std::filesystem::exists(path), ErrorKind::kConfig, "missing " + what + " checkpoint: " + path.string());
}

// ---------------------------------------------------------------------------
// gen-corpus

struct CorpusResult {
  std::size_t utterances = 0;
  std::string manifest_hash;
};

inline CorpusResult cmd_gen_corpus(const RunConfig& cfg, std::ostream* log = nullptr) {
  const auto corpus = corpus::generate_synthetic_corpus(cfg.corpus);
  corpus::write_corpus_directory(corpus, cfg.corpus, cfg.paths.corpus_dir());
  CorpusResult r{corpus.manifest.size(), file_sha256(cfg.paths.corpus_dir() / "manifest.tsv")};
  if (log) *log << "gen-corpus: " << r.utterances << " utterances -> " << cfg.paths.corpus_dir().string() << '\n';
  return r;
}

// ---------------------------------------------------------------------------
// augment

struct AugmentResult {
  std::size_t originals = 0;
  std::size_t translated = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  std::size_t lines = 0;
};

/// Training-split sentences tagged with the source dialect, plus (when enabled)
/// their translations into the target dialect, as an MD-PL-BERT text corpus.
inline AugmentResult cmd_augment(const RunConfig& cfg, std::ostream* log = nullptr,
                                 augment::TranslatorBackend* backend_override = nullptr) {
  const auto ctx = load_corpus_context(cfg);
  const auto& b = *ctx.bundle;
  require(b.dialects.size() >= 2 || !cfg.augment.translate, ErrorKind::kConfig,
          "translation needs a corpus with two dialects");
  const corpus::DialectId source(cfg.augment.source_dialect.empty() ? b.dialects.at(0).str() : cfg.augment.source_dialect);
  std::vector<augment::SourceSentence> originals;
  std::vector<std::string> sentences;
  for (std::size_t i : ctx.split.train) {
    originals.push_back({source, b.manifest[i].graphemes});
    sentences.push_back(corpus::join(b.manifest[i].graphemes));
  }
  AugmentResult r;
  r.originals = originals.size();
  std::vector<augment::TranslationRecord> records;
  std::optional<corpus::DialectId> target;
  if (cfg.augment.translate) {
    target = corpus::DialectId(cfg.augment.target_dialect.empty() ? b.dialects.at(1).str() : cfg.augment.target_dialect);
    std::unique_ptr<augment::TranslatorBackend> owned;
    augment::TranslatorBackend* backend = backend_override;
    if (!backend) {
      if (cfg.augment.backend == "remote")
        owned = std::make_unique<augment::RemoteLlmTranslator>(cfg.augment.remote);
      else if (cfg.augment.substitution_table.empty())
        owned = std::make_unique<augment::RuleBasedTranslator>();
      else
        owned = std::make_unique<augment::RuleBasedTranslator>(augment::load_rule_translator(cfg.augment.substitution_table));
      backend = owned.get();
    }
    augment::TranslateOptions options;
    options.max_attempts = cfg.augment.max_attempts;
    options.initial_backoff_seconds = cfg.augment.initial_backoff_seconds;
    options.max_in_flight = cfg.augment.max_in_flight;
    options.audit_log = cfg.paths.audit_log();
    std::filesystem::remove(options.audit_log);
    records = augment::translate_corpus(sentences, target->str(), *backend, options, cfg.augment.remote.prompt);
    for (const auto& rec : records) (rec.ok() ? r.translated : r.failed)++;
    std::filesystem::create_directories(cfg.paths.translations().parent_path());
    write_file_bytes(cfg.paths.translations(), augment::format_translation_records(records));
  } else {
    std::filesystem::remove(cfg.paths.translations());
  }
  const auto assembled = augment::assemble_multidialect_corpus(originals, records, target.value_or(source), b.lexicon, log);
  r.skipped = assembled.skipped;
  r.lines = assembled.entries.size();
  std::filesystem::create_directories(cfg.paths.text_corpus().parent_path());
  mdplbert::save_text_corpus(assembled.entries, cfg.paths.text_corpus());
  if (log)
    *log << "augment: " << r.originals << " originals, " << r.translated << " translated, " << r.failed << " failed, "
         << r.skipped << " skipped -> " << r.lines << " lines\n";
  return r;
}

// ---------------------------------------------------------------------------
// pretrain-bert

struct BertResult {
  std::string hash;
  mdplbert::PretrainReport report;
};

inline BertResult cmd_pretrain_bert(const RunConfig& cfg, std::ostream* log = nullptr) {
  const auto bundle = corpus::load_corpus_directory(cfg.paths.corpus_dir());
  require(std::filesystem::exists(cfg.paths.text_corpus()), ErrorKind::kConfig,
          "missing text corpus " + cfg.paths.text_corpus().string() + " (run augment first)");
  const auto entries = mdplbert::load_text_corpus(cfg.paths.text_corpus());
  const auto vocab = make_vocabulary(bundle);
  std::vector<mdplbert::PhonemeTokenSequence> sequences;
  for (const auto& e : entries) sequences.push_back(mdplbert::build_inputs(e.graphemes, e.dialect, bundle.lexicon, vocab));
  Bert model(cfg.bert, vocab);
  mdplbert::PretrainOptions options;
  options.iterations = cfg.training.bert.iterations;
  options.warmup_steps = cfg.training.warmup_steps;
  options.learning_rate = cfg.training.bert.learning_rate;
  options.batch_size = cfg.training.bert.batch_size;
  options.masking = cfg.masking;
  options.seed = cfg.seed;
  BertResult r;
  r.report = mdplbert::pretrain(model, sequences, options);
  Checkpoint ckpt = model.to_checkpoint();
  ckpt.upstream["text_corpus"] = file_sha256(cfg.paths.text_corpus());
  std::filesystem::create_directories(cfg.paths.checkpoint_dir());
  r.hash = save_checkpoint(ckpt, cfg.paths.bert());
  std::filesystem::create_directories(cfg.paths.report_dir());
  const auto& loss = r.report.total_loss;
  write_json(cfg.paths.report_dir() / "bert_report.json",
             {{"iterations", options.iterations},
              {"sentences", sequences.size()},
              {"first_loss", loss.empty() ? 0.0 : loss.front()},
              {"final_loss", loss.empty() ? 0.0 : loss.back()},
              {"checkpoint", r.hash}});
  if (log)
    *log << "pretrain-bert: " << sequences.size() << " sentences, " << options.iterations << " steps"
         << (loss.empty() ? "" : ", loss " + std::to_string(loss.front()) + " -> " + std::to_string(loss.back())) << '\n';
  return r;
}

// ---------------------------------------------------------------------------
// train-stage1

struct Stage1Result {
  std::string quantizer_hash;
  std::string backbone_hash;
  std::vector<double> total_loss;  // per step
  std::vector<double> tts_loss;
  std::vector<double> vq_loss;
  double codebook_perplexity = 0.0;
};

/// Per-utterance tensors for joint training.
struct Stage1Item {
  std::vector<int> phoneme_ids;
  int speaker = 0;
  std::vector<int> durations;
  nn::Matrix<float> frames;
  nn::Matrix<float> pitch;   // P x 1
  nn::Matrix<float> pooled;  // P x provider dims
};

inline Stage1Item make_stage1_item(const CorpusContext& ctx, std::size_t i, const Backbone& bb) {
  const auto& u = ctx.utt(i);
  Stage1Item item;
  item.phoneme_ids = bb.phoneme_ids(u.phonemes);
  item.speaker = bb.speaker_id(u.speaker_id);
  item.durations = u.alignment.durations();
  item.frames = ctx.frames(i);
  require(!u.alignment.spans.empty() && u.alignment.spans.front().start_frame == 0 &&
              u.alignment.total_frames() == item.frames.rows(),
          ErrorKind::kAlignment, "alignment of " + u.utt_id + " does not cover its feature frames");
  item.pitch = backbone::phoneme_pitch(item.frames, item.durations);
  item.pooled = features::phoneme_features(*ctx.provider, u).cast<float>();
  return item;
}

inline backbone::BackboneConfig make_backbone_config(const RunConfig& cfg, const CorpusContext& ctx) {
  backbone::BackboneConfig bc;
  bc.width = cfg.backbone.width;
  bc.encoder_layers = cfg.backbone.encoder_layers;
  bc.decoder_layers = cfg.backbone.decoder_layers;
  bc.heads = cfg.backbone.heads;
  bc.ff_width = cfg.backbone.ff_width;
  bc.variance_width = cfg.backbone.variance_width;
  bc.alv_classes = cfg.quantizer.codebook_size;
  bc.phonemes = phoneme_vocabulary(ctx.bundle->lexicon);
  bc.speakers = speaker_list(ctx.bundle->manifest);
  bc.seed = cfg.backbone.seed;
  // Normalisation constants from the training split.
  double psum = 0.0, psq = 0.0;
  std::size_t pn = 0, fn = 0;
  std::vector<double> fsum;
  for (std::size_t i : ctx.split.train) {
    const auto frames = ctx.frames(i);
    if (fsum.empty()) fsum.assign(static_cast<std::size_t>(frames.cols()), 0.0);
    require(static_cast<std::size_t>(frames.cols()) == fsum.size(), ErrorKind::kFormat, "feature width varies across the corpus");
    for (Eigen::Index c = 0; c < frames.cols(); ++c) fsum[static_cast<std::size_t>(c)] += frames.col(c).cast<double>().sum();
    fn += static_cast<std::size_t>(frames.rows());
    const auto pitch = backbone::phoneme_pitch(frames, ctx.utt(i).alignment.durations());
    for (Eigen::Index p = 0; p < pitch.rows(); ++p) {
      psum += pitch(p, 0);
      psq += static_cast<double>(pitch(p, 0)) * pitch(p, 0);
      ++pn;
    }
  }
  require(pn > 1 && fn > 0, ErrorKind::kConfig, "training split is empty");
  bc.output_dim = static_cast<int>(fsum.size());
  bc.pitch_mean = psum / static_cast<double>(pn);
  bc.pitch_std = std::sqrt(std::max(1e-12, psq / static_cast<double>(pn) - bc.pitch_mean * bc.pitch_mean));
  for (double s : fsum) bc.output_mean.push_back(s / static_cast<double>(fn));
  return bc;
}

/// Joint optimisation of the reference encoder, codebook and backbone on
/// tts_loss + vq_loss, with the straight-through estimator across quantisation.
inline Stage1Result cmd_train_stage1(const RunConfig& cfg, std::ostream* log = nullptr) {
  const auto ctx = load_corpus_context(cfg);
  quantizer::EncoderConfig ec = cfg.quantizer;
  ec.input_dim = ctx.provider->dimensionality();
  Encoder encoder(ec);
  Backbone bb(make_backbone_config(cfg, ctx));

  std::vector<Stage1Item> items;
  items.reserve(ctx.split.train.size());
  for (std::size_t i : ctx.split.train) items.push_back(make_stage1_item(ctx, i, bb));

  nn::ParamRegistry<float> joint;
  joint.adopt("quantizer.", encoder.params());
  joint.adopt("backbone.", bb.params());
  nn::Adam<float> optimizer(joint);
  const auto& sched = cfg.training.stage1;
  nn::LinearWarmupSchedule schedule{sched.learning_rate, cfg.training.warmup_steps, sched.iterations};
  nn::Rng rng(cfg.seed);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  auto& codebook = encoder.codebook();
  std::vector<long> window_usage(static_cast<std::size_t>(ec.codebook_size), 0);

  Stage1Result r;
  std::ostringstream curve;
  curve << "step\ttotal\ttts\tvq\tperplexity\tgrad_norm\n";
  for (long step = 1; step <= sched.iterations; ++step) {
    std::vector<nn::Var<float>> totals;
    double tts_sum = 0.0, vq_sum = 0.0;
    for (int k = 0; k < sched.batch_size; ++k) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Stage1Item& it = items[order[cursor++]];
      nn::Var<float> z_e = encoder.encode(it.pooled);
      const auto q = quantizer::quantize(z_e.value(), codebook);
      for (int idx : q.indices) ++window_usage[static_cast<std::size_t>(idx)];
      nn::Var<float> z_q = nn::gather_rows(codebook.codes, q.indices);
      nn::Var<float> alv_rows = nn::straight_through(z_e, z_q.value());
      const auto out = bb.forward(it.phoneme_ids, it.speaker, alv_rows, backbone::Mode::kTeacherForced, it.durations, it.pitch);
      const auto tts = backbone::tts_loss(out.frames, nn::Var<float>(it.frames), out.log_durations, it.durations, out.pitch,
                                          nn::Var<float>(it.pitch));
      const auto vq = quantizer::vq_loss(z_e, z_q, ec.beta);
      tts_sum += tts.total.item();
      vq_sum += vq.total.item();
      totals.push_back(nn::add(tts.total, vq.total));
    }
    nn::Var<float> loss = totals.front();
    for (std::size_t i = 1; i < totals.size(); ++i) loss = nn::add(loss, totals[i]);
    loss = nn::scale(loss, 1.0f / static_cast<float>(totals.size()));
    const double value = loss.item();
    if (!std::isfinite(value))
      fail(ErrorKind::kNumeric, "stage-1 loss diverged at step " + std::to_string(step) + " (tts " +
                                    std::to_string(tts_sum) + ", vq " + std::to_string(vq_sum) + ")");
    nn::backward(loss);
    const double grad_norm = optimizer.step(schedule(step));
    const double b = static_cast<double>(totals.size());
    r.total_loss.push_back(value);
    r.tts_loss.push_back(tts_sum / b);
    r.vq_loss.push_back(vq_sum / b);
    if (step % cfg.training.log_every == 0 || step == sched.iterations || step == 1) {
      const double ppl = quantizer::codebook_perplexity(window_usage);
      curve << step << '\t' << value << '\t' << tts_sum / b << '\t' << vq_sum / b << '\t' << ppl << '\t' << grad_norm << '\n';
      if (log)
        *log << "train-stage1: step " << step << "/" << sched.iterations << " loss " << value << " (tts " << tts_sum / b
             << ", vq " << vq_sum / b << ") perplexity " << ppl << '\n';
      std::fill(window_usage.begin(), window_usage.end(), 0);
    }
  }
  bb.set_alv_table(codebook.codes.value());
  r.codebook_perplexity = quantizer::codebook_perplexity(codebook.usage);

  std::filesystem::create_directories(cfg.paths.checkpoint_dir());
  Checkpoint qc = encoder.to_checkpoint(ctx.provider->dimensionality());
  qc.upstream["corpus"] = ctx.manifest_hash;
  r.quantizer_hash = save_checkpoint(qc, cfg.paths.quantizer());
  Checkpoint bc = bb.to_checkpoint();
  bc.upstream["corpus"] = ctx.manifest_hash;
  bc.upstream["quantizer"] = r.quantizer_hash;
  r.backbone_hash = save_checkpoint(bc, cfg.paths.backbone());

  std::filesystem::create_directories(cfg.paths.report_dir());
  write_file_bytes(cfg.paths.report_dir() / "stage1_curve.tsv", curve.str());
  write_json(cfg.paths.report_dir() / "stage1_report.json",
             {{"iterations", sched.iterations},
              {"first_loss", r.total_loss.empty() ? 0.0 : r.total_loss.front()},
              {"final_loss", r.total_loss.empty() ? 0.0 : r.total_loss.back()},
              {"codebook_perplexity", r.codebook_perplexity},
              {"quantizer", r.quantizer_hash},
              {"backbone", r.backbone_hash}});
  return r;
}

struct Stage1Models {
  Encoder encoder;
  Backbone backbone;
  std::string quantizer_hash;
  std::string backbone_hash;
};

/// Loads both stage-1 checkpoints and checks that the backbone was trained
/// against this quantizer and the current corpus.
inline Stage1Models load_stage1(const RunConfig& cfg, const std::string& manifest_hash) {
  require_checkpoint(cfg.paths.quantizer(), "quantizer");
  require_checkpoint(cfg.paths.backbone(), "backbone");
  const auto qbytes = read_file_bytes(cfg.paths.quantizer());
  const auto bbytes = read_file_bytes(cfg.paths.backbone());
  const Checkpoint qc = parse_checkpoint(qbytes, cfg.paths.quantizer().string());
  const Checkpoint bc = parse_checkpoint(bbytes, cfg.paths.backbone().string());
  require(qc.module == "quantizer", ErrorKind::kFormat, cfg.paths.quantizer().string() + " is not a quantizer checkpoint");
  Stage1Models m{Encoder::from_checkpoint(qc), Backbone::from_checkpoint(bc), sha256_hex(qbytes), sha256_hex(bbytes)};
  verify_upstream(bc, "quantizer", m.quantizer_hash);
  verify_upstream(qc, "corpus", manifest_hash);
  verify_upstream(bc, "corpus", manifest_hash);
  return m;
}

// ---------------------------------------------------------------------------
// train-stage2

struct Stage2Result {
  std::string hash;
  bool from_scratch = false;
  alvpredictor::FinetuneReport report;
  alvpredictor::ValidationResult validation;
};

inline std::vector<alvpredictor::Example> make_examples(const CorpusContext& ctx, const std::vector<std::size_t>& indices,
                                                        const Encoder& encoder, const mdplbert::Vocabulary& vocab) {
  std::vector<alvpredictor::Example> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& u = ctx.utt(i);
    out.push_back({mdplbert::build_inputs(u.graphemes, u.dialect, ctx.bundle->lexicon, vocab),
                   quantizer::extract_alv(u, *ctx.provider, encoder)});
  }
  return out;
}

inline std::filesystem::path predictor_report_path(const RunConfig& cfg, bool from_scratch) {
  return cfg.paths.report_dir() / (from_scratch ? "predictor_scratch_report.json" : "predictor_report.json");
}

/// Fine-tunes the ALV predictor on reference-encoder ALVs of the training split.
/// The default run starts from the pre-trained MD-PL-BERT; `from_scratch` skips it.
inline Stage2Result cmd_train_stage2(const RunConfig& cfg, bool from_scratch, std::ostream* log = nullptr) {
  const auto ctx = load_corpus_context(cfg);
  const auto stage1 = load_stage1(cfg, ctx.manifest_hash);
  const auto vocab = make_vocabulary(*ctx.bundle);
  mdplbert::BertConfig pc = cfg.bert;
  pc.seed = cfg.predictor_seed;
  Predictor predictor(pc, vocab, stage1.encoder.config().codebook_size);
  std::string bert_hash;
  if (!from_scratch) {
    require_checkpoint(cfg.paths.bert(), "pre-trained BERT");
    const auto bytes = read_file_bytes(cfg.paths.bert());
    bert_hash = sha256_hex(bytes);
    const Bert bert = Bert::from_checkpoint(parse_checkpoint(bytes, cfg.paths.bert().string()));
    predictor.initialize_from(bert);
  }
  const auto train = make_examples(ctx, ctx.split.train, stage1.encoder, vocab);
  const auto validation = make_examples(ctx, ctx.split.validation, stage1.encoder, vocab);
  alvpredictor::FinetuneOptions options;
  options.iterations = cfg.training.stage2.iterations;
  options.warmup_steps = cfg.training.warmup_steps;
  options.learning_rate = cfg.training.stage2.learning_rate;
  options.batch_size = cfg.training.stage2.batch_size;
  options.eval_every = cfg.training.stage2_eval_every;
  options.seed = cfg.predictor_seed;

  Stage2Result r;
  r.from_scratch = from_scratch;
  r.report = alvpredictor::finetune(predictor, train, validation, options);
  r.validation = alvpredictor::validate(predictor, validation);
  Checkpoint ckpt = predictor.to_checkpoint();
  ckpt.upstream["corpus"] = ctx.manifest_hash;
  ckpt.upstream["quantizer"] = stage1.quantizer_hash;
  ckpt.upstream["backbone"] = stage1.backbone_hash;
  if (!from_scratch) ckpt.upstream["bert"] = bert_hash;
  std::filesystem::create_directories(cfg.paths.checkpoint_dir());
  r.hash = save_checkpoint(ckpt, cfg.paths.predictor(from_scratch));
  std::filesystem::create_directories(cfg.paths.report_dir());
  json curve = json::array();
  for (const auto& [step, loss] : r.report.validation_curve) curve.push_back({step, loss});
  write_json(predictor_report_path(cfg, from_scratch),
             {{"from_scratch", from_scratch},
              {"iterations", options.iterations},
              {"seed", options.seed},
              {"validation_accuracy", r.validation.accuracy},
              {"validation_loss", r.validation.loss},
              {"initial_validation_loss", r.report.initial_validation_loss},
              {"best_step", r.report.best_step},
              {"validation_curve", curve},
              {"checkpoint", r.hash}});
  if (log)
    *log << "train-stage2" << (from_scratch ? " (from scratch)" : "") << ": validation accuracy " << r.validation.accuracy
         << ", loss " << r.validation.loss << " (best step " << r.report.best_step << ")\n";
  return r;
}

/// Loads a predictor and rejects it if it was trained against other stage-1 checkpoints.
inline Predictor load_predictor(const RunConfig& cfg, bool from_scratch, const Stage1Models& stage1) {
  const auto path = cfg.paths.predictor(from_scratch);
  require_checkpoint(path, from_scratch ? "from-scratch predictor" : "predictor");
  const Checkpoint ckpt = load_checkpoint(path, "predictor");
  verify_upstream(ckpt, "quantizer", stage1.quantizer_hash);
  verify_upstream(ckpt, "backbone", stage1.backbone_hash);
  if (ckpt.upstream.count("bert") && std::filesystem::exists(cfg.paths.bert()))
    verify_upstream(ckpt, "bert", file_sha256(cfg.paths.bert()));
  return Predictor::from_checkpoint(ckpt);
}

// ---------------------------------------------------------------------------
// synthesize / extract-alv

enum class SynthMode { kPredicted, kReference, kNone };

inline SynthMode parse_synth_mode(const std::string& s) {
  if (s == "predicted_alv") return SynthMode::kPredicted;
  if (s == "reference_alv") return SynthMode::kReference;
  if (s == "no_alv") return SynthMode::kNone;
  fail(ErrorKind::kConfig, "unknown synthesis mode '" + s + "' (expected predicted_alv, reference_alv or no_alv)");
}

struct SynthesizeRequest {
  std::string text;  // space-separated words
  std::string speaker;
  std::string dialect;
  SynthMode mode = SynthMode::kPredicted;
  std::string reference_utt;
  std::filesystem::path output;  // ALVF features; ALVs go to <output>.alvs
  std::filesystem::path wav;     // optional
};

struct SynthesisResult {
  std::vector<std::string> phonemes;
  std::vector<int> alvs;  // empty in no_alv mode
  nn::Matrix<float> frames;
  std::vector<int> durations;
};

/// Resolves the ALVs for `phonemes` according to `mode`, then runs the backbone.
inline SynthesisResult synthesize(const Backbone& bb, const std::vector<std::string>& phonemes, const std::string& speaker,
                                  const std::optional<std::vector<int>>& alvs) {
  if (alvs)
    require(alvs->size() == phonemes.size(), ErrorKind::kContract,
            "ALV sequence has " + std::to_string(alvs->size()) + " entries for " + std::to_string(phonemes.size()) +
                " phonemes");
  const auto out = bb.synthesize(phonemes, speaker, alvs ? &*alvs : nullptr);
  SynthesisResult r;
  r.phonemes = phonemes;
  if (alvs) r.alvs = *alvs;
  r.frames = out.frames.value();
  r.durations = out.durations;
  return r;
}

inline std::string format_alvs(const std::vector<int>& alvs) {
  std::string s;
  for (std::size_t i = 0; i < alvs.size(); ++i) s += (i ? " " : "") + std::to_string(alvs[i]);
  return s;
}

inline SynthesisResult cmd_synthesize(const RunConfig& cfg, const SynthesizeRequest& req, std::ostream* log = nullptr) {
  const auto ctx = load_corpus_context(cfg);
  const auto stage1 = load_stage1(cfg, ctx.manifest_hash);
  const auto graphemes = corpus::split_ws(req.text);
  require(!graphemes.empty(), ErrorKind::kInput, "synthesis text is empty");
  const auto phonemes = corpus::g2p_lookup(graphemes, ctx.bundle->lexicon);
  stage1.backbone.speaker_id(req.speaker);
  std::optional<std::vector<int>> alvs;
  switch (req.mode) {
    case SynthMode::kPredicted: {
      require(!req.dialect.empty(), ErrorKind::kConfig, "predicted_alv mode needs a dialect");
      const Predictor predictor = load_predictor(cfg, false, stage1);
      alvs = predictor.predict(graphemes, corpus::DialectId(req.dialect), ctx.bundle->lexicon).alvs;
      break;
    }
    case SynthMode::kReference: {
      const auto& m = ctx.bundle->manifest;
      auto it = std::find_if(m.begin(), m.end(), [&](const corpus::Utterance& u) { return u.utt_id == req.reference_utt; });
      require(it != m.end(), ErrorKind::kConfig, "unknown reference utterance '" + req.reference_utt + "'");
      require(it->phonemes.size() == phonemes.size(), ErrorKind::kContract,
              "reference utterance has " + std::to_string(it->phonemes.size()) + " phonemes but the text has " +
                  std::to_string(phonemes.size()));
      alvs = quantizer::extract_alv(*it, *ctx.provider, stage1.encoder);
      break;
    }
    case SynthMode::kNone:
      break;
  }
  auto r = synthesize(stage1.backbone, phonemes, req.speaker, alvs);
  if (!req.output.empty()) {
    if (req.output.has_parent_path()) std::filesystem::create_directories(req.output.parent_path());
    corpus::write_feature_file(req.output, r.frames);
    write_file_bytes(req.output.string() + ".alvs", (alvs ? format_alvs(r.alvs) : std::string("none")) + "\n");
  }
  if (!req.wav.empty()) {
    if (req.wav.has_parent_path()) std::filesystem::create_directories(req.wav.parent_path());
    backbone::write_wav(req.wav, r.frames, ctx.bundle->frame_rate);
  }
  if (log) *log << "synthesize: " << r.frames.rows() << " frames, ALVs [" << format_alvs(r.alvs) << "]\n";
  return r;
}

/// `utt_id \t alvs` for the requested utterances (all when empty).
inline std::string cmd_extract_alv(const RunConfig& cfg, const std::vector<std::string>& utt_ids) {
  const auto ctx = load_corpus_context(cfg);
  require_checkpoint(cfg.paths.quantizer(), "quantizer");
  const Checkpoint qc = load_checkpoint(cfg.paths.quantizer(), "quantizer");
  verify_upstream(qc, "corpus", ctx.manifest_hash);
  const Encoder encoder = Encoder::from_checkpoint(qc);
  std::set<std::string> wanted(utt_ids.begin(), utt_ids.end());
  std::string out;
  std::size_t found = 0;
  for (const auto& u : ctx.bundle->manifest) {
    if (!wanted.empty() && !wanted.count(u.utt_id)) continue;
    ++found;
    out += u.utt_id + '\t' + format_alvs(quantizer::extract_alv(u, *ctx.provider, encoder)) + '\n';
  }
  require(wanted.empty() || found == wanted.size(), ErrorKind::kConfig, "some requested utterances are not in the corpus");
  return out;
}

}  // namespace alvtts::pipeline
