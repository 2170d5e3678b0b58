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

// End-to-end acceptance run: trains the desk-scale pipeline on the synthetic
// corpus and prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alvtts/pipeline/evaluate.hpp"
#include "alvtts/pipeline/stages.hpp"

namespace fs = std::filesystem;
using namespace alvtts;
using pipeline::RunConfig;
using nn::Matrix;
using json = nlohmann::json;

namespace {

using MatD = Matrix<double>;
using VarD = nn::Var<double>;

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Verdict {
  int number = 0;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

/// Collects named checks; the criterion passes when all of them do.
class Checklist {
 public:
  void check(const std::string& name, bool ok, const std::string& value = "") {
    pass_ = pass_ && ok;
    if (!detail_.empty()) detail_ += "; ";
    detail_ += name + (value.empty() ? "" : " " + value) + (ok ? "" : " [fail]");
  }
  bool pass() const { return pass_; }
  const std::string& detail() const { return detail_; }

 private:
  bool pass_ = true;
  std::string detail_;
};

MatD random_matrix(nn::Index rows, nn::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatD m(rows, cols);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

RunConfig with_work_dir(RunConfig cfg, const fs::path& dir) {
  cfg.paths.work_dir = dir;
  return cfg;
}

void copy_stage1(const RunConfig& from, const RunConfig& to) {
  fs::create_directories(to.paths.checkpoint_dir());
  fs::copy(from.paths.corpus_dir(), to.paths.corpus_dir(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  fs::copy_file(from.paths.quantizer(), to.paths.quantizer(), fs::copy_options::overwrite_existing);
  fs::copy_file(from.paths.backbone(), to.paths.backbone(), fs::copy_options::overwrite_existing);
}

double cd_accuracy(const json& metrics) { return metrics.at("alv_oracle_accuracy").at("cd").at("predicted_alv").at("accuracy"); }

// ---------------------------------------------------------------------------

Verdict criterion_unit_properties() {
  Stopwatch clock;
  Checklist c;
  std::mt19937_64 rng(2026);

  {  // phoneme pooling against a direct loop
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<int> durations;
      for (int p = 0; p < 12; ++p) durations.push_back(1 + static_cast<int>(rng() % 6));
      const auto alignment = corpus::Alignment::from_durations(durations);
      features::FrameSequence f;
      f.frames = random_matrix(alignment.spans.back().end_frame, 3, rng);
      const auto pooled = features::pool_phoneme_level(f, alignment);
      for (std::size_t p = 0; p < durations.size(); ++p)
        for (int d = 0; d < 3; ++d) {
          double sum = 0.0;
          for (int t = alignment.spans[p].start_frame; t < alignment.spans[p].end_frame; ++t) sum += f.frames(t, d);
          worst = std::max(worst, std::abs(pooled(static_cast<nn::Index>(p), d) - sum / durations[p]));
        }
    }
    c.check("pooling max_err", worst <= 1e-6, fmt(worst, 9));
  }
  {  // nearest code by exhaustive scan, ties to the lowest index
    bool ok = true;
    for (int trial = 0; trial < 200; ++trial) {
      quantizer::Codebook<double> cb{VarD(random_matrix(4, 3, rng)), {}};
      const MatD z = random_matrix(5, 3, rng);
      const auto q = quantizer::quantize(z, cb);
      for (nn::Index r = 0; r < z.rows(); ++r) {
        int best = 0;
        for (int k = 1; k < 4; ++k)
          if ((z.row(r) - cb.codes.value().row(k)).squaredNorm() < (z.row(r) - cb.codes.value().row(best)).squaredNorm())
            best = k;
        ok = ok && q.indices[static_cast<std::size_t>(r)] == best;
      }
    }
    MatD codes(3, 1);
    codes << 1.0, -1.0, 3.0;
    quantizer::Codebook<double> tie{VarD(codes), {}};
    ok = ok && quantizer::quantize(MatD(MatD::Zero(1, 1)), tie).indices[0] == 0;
    c.check("nearest_code", ok);
  }
  {  // VQ loss worked example
    MatD ze = MatD::Zero(1, 3), zq = MatD::Zero(1, 3);
    zq(0, 1) = 1.0;
    const double total = quantizer::vq_loss(VarD(ze, true), VarD(zq, true), 4.0).parts().total;
    c.check("vq_total", std::abs(total - 5.0) <= 1e-6, fmt(total, 6));
  }
  {  // straight-through gradient against finite differences
    const double beta = 4.0, h = 1e-4;
    const MatD codes = 3.0 * random_matrix(4, 3, rng);
    const MatD ze0 = codes + 0.2 * random_matrix(4, 3, rng);
    const MatD w = random_matrix(4, 3, rng);
    quantizer::Codebook<double> cb{VarD(codes), {}};
    const MatD offset = quantizer::quantize(ze0, cb).quantized - ze0;
    auto downstream = [&](const VarD& x) { return nn::sum_all(nn::mul(nn::tanh(x), VarD(w))); };
    VarD ze(ze0, true);
    const auto q = quantizer::quantize(ze.value(), cb);
    nn::backward(nn::add(downstream(nn::straight_through(ze, q.quantized)),
                         quantizer::vq_loss(ze, VarD(q.quantized), beta).total));
    auto surrogate = [&](const MatD& z) {
      const auto parts = quantizer::vq_loss(VarD(z), VarD(quantizer::quantize(z, cb).quantized), beta).parts();
      return downstream(VarD(MatD(z + offset))).item() + parts.total - parts.codebook_term;
    };
    double worst = 0.0;
    for (nn::Index i = 0; i < ze0.size(); ++i) {
      MatD up = ze0, down = ze0;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double numeric = (surrogate(up) - surrogate(down)) / (2 * h);
      const double analytic = ze.grad().data()[i];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max(1.0, std::abs(analytic)));
    }
    c.check("straight_through rel_err", worst <= 1e-3, fmt(worst, 6));
  }
  {  // cross-entropy of a uniform distribution
    const double ce = alvpredictor::celoss({0, 1, 2, 3, 1}, MatD::Constant(5, 4, 0.25));
    c.check("ce_uniform", std::abs(ce - std::log(4.0)) <= 1e-6, fmt(ce, 6));
  }
  {  // BLEU hand example
    const double b = evalkit::bleu4(evalkit::Tokens{"a", "b", "c", "d", "e"}, {evalkit::Tokens{"a", "b", "c", "d", "f"}});
    c.check("bleu", std::abs(b - 0.66874) <= 1e-4, fmt(b, 5));
  }
  {  // masking frequencies
    mdplbert::Vocabulary v({"DLA", "DLB"}, {"a", "k"}, {"w"});
    const auto seq = mdplbert::build_inputs(std::vector<std::string>(10, "a"), corpus::DialectId("DLA"),
                                            std::vector<mdplbert::WordSpan>{{{0, 10}, 0}}, v);
    const mdplbert::MaskingPolicy policy;
    std::array<double, 3> counts{};
    double total = 0.0;
    bool dialect_kept = true;
    for (int trial = 0; trial < 10000; ++trial) {
      nn::Rng r(static_cast<std::uint64_t>(trial));
      const auto m = mdplbert::apply_masking(seq, policy, v, r);
      dialect_kept = dialect_kept && m.sequence.tokens[0] == seq.tokens[0];
      for (auto a : m.actions) ++counts[static_cast<std::size_t>(a)];
      total += static_cast<double>(m.actions.size());
    }
    const double fm = counts[static_cast<std::size_t>(mdplbert::MaskAction::kMask)] / total;
    const double fr = counts[static_cast<std::size_t>(mdplbert::MaskAction::kRandom)] / total;
    const double fk = counts[static_cast<std::size_t>(mdplbert::MaskAction::kKeep)] / total;
    const bool ok = dialect_kept && std::abs(fm - policy.replace_mask_prob) <= 0.02 &&
                    std::abs(fr - policy.replace_random_prob) <= 0.02 && std::abs(fk - policy.keep_prob) <= 0.02;
    c.check("masking", ok, fmt(fm, 3) + "/" + fmt(fr, 3) + "/" + fmt(fk, 3));
  }
  const double t = clock.seconds();
  c.check("runtime", t < 120.0, fmt(t, 1) + "s");
  return {1, c.pass(), c.detail(), t};
}

// ---------------------------------------------------------------------------

struct MainRun {
  RunConfig cfg;
  json metrics;
  double stage1_seconds = 0.0;
  double cd_seconds = 0.0;  // augment + pre-training + fine-tuning + evaluation
  double codebook_perplexity = 0.0;
};

MainRun train_main(const fs::path& dir) {
  MainRun run;
  run.cfg = with_work_dir(pipeline::preset_config("desk"), dir);
  run.cfg.validate();
  pipeline::cmd_gen_corpus(run.cfg, &std::cout);
  {
    Stopwatch clock;
    const auto r = pipeline::cmd_train_stage1(run.cfg, &std::cout);
    run.stage1_seconds = clock.seconds();
    run.codebook_perplexity = r.codebook_perplexity;
  }
  Stopwatch clock;
  pipeline::cmd_augment(run.cfg, &std::cout);
  pipeline::cmd_pretrain_bert(run.cfg, &std::cout);
  pipeline::cmd_train_stage2(run.cfg, false, &std::cout);
  run.metrics = pipeline::cmd_evaluate(run.cfg, &std::cout);
  run.cd_seconds = clock.seconds();
  pipeline::cmd_train_stage2(run.cfg, true, &std::cout);
  // Re-evaluate so the summary also carries the from-scratch report.
  run.metrics = pipeline::cmd_evaluate(run.cfg, &std::cout);
  return run;
}

Verdict criterion_id_fidelity(const MainRun& run) {
  Checklist c;
  const auto& id = run.metrics.at("alv_oracle_accuracy").at("id");
  const double acc = id.at("accuracy");
  c.check("id_accuracy", acc >= 0.90, fmt(acc) + " mapping " + id.at("mapping").get<std::string>());
  c.check("codebook_perplexity", run.codebook_perplexity >= 2.0, fmt(run.codebook_perplexity, 3));
  c.check("stage1_runtime", run.stage1_seconds <= 900.0, fmt(run.stage1_seconds, 1) + "s");
  return {2, c.pass(), c.detail(), run.stage1_seconds};
}

Verdict criterion_cross_dialect(const MainRun& run) {
  Checklist c;
  const auto& cd = run.metrics.at("alv_oracle_accuracy").at("cd");
  const double acc = cd.at("predicted_alv").at("accuracy");
  const double base = cd.at("no_alv_baseline_implied").at("accuracy");
  const double synth = cd.at("synthesized_implied").at("accuracy");
  c.check("cd_accuracy", acc >= 0.80, fmt(acc));
  c.check("margin_over_no_alv", acc - base >= 0.15, fmt(acc - base) + " (baseline " + fmt(base) + ", synthesized " + fmt(synth) + ")");
  c.check("runtime", run.cd_seconds <= 900.0, fmt(run.cd_seconds, 1) + "s");
  return {3, c.pass(), c.detail(), run.cd_seconds};
}

Verdict criterion_monotonic(const MainRun& run) {
  Checklist c;
  const auto& forced = run.metrics.at("logf0_by_alv").at("forced_synthesis");
  std::string means;
  for (const auto& m : forced.at("class_means")) means += (means.empty() ? "" : ",") + fmt(m.at("mean_log_f0"), 3);
  const double gap = forced.at("min_gap");
  c.check("ordering_exists", forced.at("ordering_exists").get<bool>(), "order " + forced.at("order").dump());
  c.check("min_gap", gap >= 0.05, fmt(gap) + " log-Hz, class means [" + means + "]");
  return {4, c.pass(), c.detail(), 0.0};
}

// ---------------------------------------------------------------------------

Verdict criterion_pretraining(const MainRun& run, const fs::path& root) {
  Stopwatch clock;
  Checklist c;
  std::vector<double> gains, aug_cd, single_cd;
  for (std::uint64_t s = 0; s < 3; ++s) {
    RunConfig base = run.cfg;
    base.bert.seed += s;
    base.masking.seed += s;
    base.predictor_seed += s;
    const RunConfig aug = with_work_dir(base, s == 0 ? run.cfg.paths.work_dir : root / ("seed" + std::to_string(s)) / "augmented");
    json aug_metrics = run.metrics;
    if (s != 0) {
      copy_stage1(run.cfg, aug);
      pipeline::cmd_augment(aug);
      pipeline::cmd_pretrain_bert(aug);
      pipeline::cmd_train_stage2(aug, false);
      pipeline::cmd_train_stage2(aug, true);
      aug_metrics = pipeline::cmd_evaluate(aug);
    }
    const auto& reports = aug_metrics.at("predictor_reports");
    const double pre = reports.at("pretrained").at("validation_accuracy");
    const double scratch = reports.at("from_scratch").at("validation_accuracy");
    gains.push_back(pre - scratch);
    aug_cd.push_back(cd_accuracy(aug_metrics));

    RunConfig single = with_work_dir(base, root / ("seed" + std::to_string(s)) / "single");
    single.augment.translate = false;
    copy_stage1(run.cfg, single);
    pipeline::cmd_augment(single);
    pipeline::cmd_pretrain_bert(single);
    pipeline::cmd_train_stage2(single, false);
    single_cd.push_back(cd_accuracy(pipeline::cmd_evaluate(single)));
    std::cout << "seed offset " << s << ": pretrained " << pre << ", from scratch " << scratch << ", cd augmented "
              << aug_cd.back() << ", cd single-dialect " << single_cd.back() << '\n';
  }
  const auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  std::string per_seed;
  for (double g : gains) per_seed += (per_seed.empty() ? "" : ",") + fmt(g);
  c.check("pretrained>=scratch every seed", std::all_of(gains.begin(), gains.end(), [](double g) { return g >= 0.0; }),
          "gains [" + per_seed + "]");
  c.check("mean_gain>0", mean(gains) > 0.0, fmt(mean(gains)));
  c.check("augmented>=single cd", mean(aug_cd) >= mean(single_cd), fmt(mean(aug_cd)) + " vs " + fmt(mean(single_cd)));
  return {5, c.pass(), c.detail(), clock.seconds()};
}

// ---------------------------------------------------------------------------

Verdict criterion_dialect_token(const MainRun& run, const fs::path& root) {
  Stopwatch clock;
  Checklist c;
  const auto ctx = pipeline::load_corpus_context(run.cfg);
  const auto& b = *ctx.bundle;
  const auto stage1 = pipeline::load_stage1(run.cfg, ctx.manifest_hash);
  const auto predictor = pipeline::load_predictor(run.cfg, false, stage1);
  const corpus::DialectId da = b.dialects.at(0), db = b.dialects.at(1);
  const auto divergent_list = corpus::divergent_words(b.rule_tables.at(da), b.rule_tables.at(db));
  const std::set<std::string> divergent(divergent_list.begin(), divergent_list.end());

  std::size_t occurrences = 0, differing = 0;
  for (std::size_t i : ctx.split.test) {
    const auto& u = b.manifest[i];
    const auto pa = predictor.predict(u.graphemes, da, b.lexicon).alvs;
    const auto pb = predictor.predict(u.graphemes, db, b.lexicon).alvs;
    const auto ranges = corpus::word_ranges(u.graphemes, b.lexicon);
    for (std::size_t w = 0; w < u.graphemes.size(); ++w) {
      if (!divergent.count(u.graphemes[w])) continue;
      ++occurrences;
      bool differs = false;
      for (int p = ranges[w].begin; p < ranges[w].end; ++p) differs = differs || pa[static_cast<std::size_t>(p)] != pb[static_cast<std::size_t>(p)];
      differing += differs;
    }
  }
  const double sensitivity = occurrences ? static_cast<double>(differing) / static_cast<double>(occurrences) : 0.0;
  c.check("divergent_occurrences_differing", sensitivity >= 0.70,
          fmt(sensitivity) + " (" + std::to_string(differing) + "/" + std::to_string(occurrences) + ")");

  // Null case: same seed and lexicon, no divergent words; targets from the main quantizer.
  RunConfig null_cfg = with_work_dir(run.cfg, root / "null");
  null_cfg.corpus.divergent_fraction = 0.0;
  pipeline::cmd_gen_corpus(null_cfg);
  pipeline::cmd_augment(null_cfg);
  pipeline::cmd_pretrain_bert(null_cfg);
  const auto nctx = pipeline::load_corpus_context(null_cfg);
  const auto& nb = *nctx.bundle;
  const auto vocab = pipeline::make_vocabulary(nb);
  mdplbert::BertConfig pc = null_cfg.bert;
  pc.seed = null_cfg.predictor_seed;
  pipeline::Predictor null_predictor(pc, vocab, stage1.encoder.config().codebook_size);
  null_predictor.initialize_from(pipeline::Bert::from_checkpoint(load_checkpoint(null_cfg.paths.bert(), "bert")));
  alvpredictor::FinetuneOptions options;
  options.iterations = null_cfg.training.stage2.iterations;
  options.warmup_steps = null_cfg.training.warmup_steps;
  options.learning_rate = null_cfg.training.stage2.learning_rate;
  options.batch_size = null_cfg.training.stage2.batch_size;
  options.eval_every = null_cfg.training.stage2_eval_every;
  options.seed = null_cfg.predictor_seed;
  alvpredictor::finetune(null_predictor, pipeline::make_examples(nctx, nctx.split.train, stage1.encoder, vocab),
                         pipeline::make_examples(nctx, nctx.split.validation, stage1.encoder, vocab), options);
  std::size_t phonemes = 0, agreeing = 0;
  for (std::size_t i : nctx.split.test) {
    const auto& u = nb.manifest[i];
    const auto pa = null_predictor.predict(u.graphemes, da, nb.lexicon).alvs;
    const auto pb = null_predictor.predict(u.graphemes, db, nb.lexicon).alvs;
    for (std::size_t p = 0; p < pa.size(); ++p) agreeing += pa[p] == pb[p];
    phonemes += pa.size();
  }
  const double agreement = phonemes ? static_cast<double>(agreeing) / static_cast<double>(phonemes) : 0.0;
  c.check("null_agreement", agreement >= 0.95,
          fmt(agreement) + " (" + std::to_string(agreeing) + "/" + std::to_string(phonemes) + ")");
  return {6, c.pass(), c.detail(), clock.seconds()};
}

// ---------------------------------------------------------------------------

RunConfig small_run(const fs::path& dir) {
  RunConfig cfg = with_work_dir(pipeline::preset_config("desk"), dir);
  cfg.corpus.lexicon_size = 16;
  cfg.corpus.sentence_count = 120;
  cfg.backbone.width = 16;
  cfg.backbone.ff_width = 32;
  cfg.backbone.variance_width = 16;
  cfg.quantizer.width = 16;
  cfg.bert.hidden = 16;
  cfg.bert.ff_width = 32;
  cfg.training.warmup_steps = 5;
  cfg.training.stage1 = {30, 1e-3, 4};
  cfg.training.bert = {30, 5e-4, 8};
  cfg.training.stage2 = {30, 1e-3, 8};
  cfg.training.stage2_eval_every = 10;
  cfg.training.log_every = 10;
  cfg.validate();
  return cfg;
}

std::string run_small(const RunConfig& cfg) {
  pipeline::cmd_gen_corpus(cfg);
  pipeline::cmd_augment(cfg);
  pipeline::cmd_pretrain_bert(cfg);
  pipeline::cmd_train_stage1(cfg);
  pipeline::cmd_train_stage2(cfg, false);
  pipeline::cmd_train_stage2(cfg, true);
  pipeline::cmd_evaluate(cfg);
  return read_file_bytes(cfg.paths.eval_dir() / "metrics.json");
}

template <typename F>
bool throws_kind(ErrorKind kind, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind() == kind;
  }
  return false;
}

Verdict criterion_determinism(const MainRun& run, const fs::path& root) {
  Stopwatch clock;
  Checklist c;
  const auto a = run_small(small_run(root / "determinism_a"));
  const auto b = run_small(small_run(root / "determinism_b"));
  c.check("small_run_metrics_identical", a == b, std::to_string(a.size()) + " bytes");
  const auto main_bytes = read_file_bytes(run.cfg.paths.eval_dir() / "metrics.json");
  pipeline::cmd_evaluate(run.cfg);
  c.check("main_reevaluation_identical", read_file_bytes(run.cfg.paths.eval_dir() / "metrics.json") == main_bytes);

  const auto generated = corpus::generate_synthetic_corpus(run.cfg.corpus);
  std::istringstream manifest_text(corpus::format_manifest(generated.manifest));
  c.check("manifest_round_trip", corpus::parse_manifest(manifest_text) == generated.manifest);
  const auto loaded = corpus::load_corpus_directory(run.cfg.paths.corpus_dir());
  bool same = loaded.manifest == generated.manifest && loaded.lexicon == generated.lexicon;
  for (std::size_t i = 0; same && i < generated.manifest.size(); ++i)
    same = loaded.read_features(loaded.manifest[i]) == generated.features[i];
  c.check("corpus_round_trip", same);
  const auto bytes = read_file_bytes(run.cfg.paths.backbone());
  c.check("checkpoint_round_trip", serialize_checkpoint(parse_checkpoint(bytes)) == bytes);

  const RunConfig tampered = with_work_dir(run.cfg, root / "tampered");
  copy_stage1(run.cfg, tampered);
  auto q = load_checkpoint(tampered.paths.quantizer());
  q.tensors.at("codebook.codes")(0, 0) += 0.5f;
  save_checkpoint(q, tampered.paths.quantizer());
  const auto manifest_hash = file_sha256(tampered.paths.corpus_dir() / "manifest.tsv");
  c.check("tampered_quantizer_rejected",
          throws_kind(ErrorKind::kContract, [&] { pipeline::load_stage1(tampered, manifest_hash); }));
  c.check("truncated_checkpoint_rejected",
          throws_kind(ErrorKind::kFormat, [&] { parse_checkpoint(std::string_view(bytes).substr(0, bytes.size() / 2)); }));
  return {7, c.pass(), c.detail(), clock.seconds()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alvtts acceptance run"};
  fs::path work_dir = "acceptance_run";
  app.add_option("--work-dir", work_dir, "scratch directory (recreated)");
  CLI11_PARSE(app, argc, argv);

  std::vector<Verdict> verdicts;
  const auto report = [&](const Verdict& v) {
    verdicts.push_back(v);
    std::cout << "criterion " << v.number << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << " ("
              << fmt(v.seconds, 1) << "s)" << std::endl;
  };
  try {
    fs::remove_all(work_dir);
    fs::create_directories(work_dir);
    report(criterion_unit_properties());
    const MainRun run = train_main(work_dir / "main");
    report(criterion_id_fidelity(run));
    report(criterion_cross_dialect(run));
    report(criterion_monotonic(run));
    report(criterion_pretraining(run, work_dir));
    report(criterion_dialect_token(run, work_dir));
    report(criterion_determinism(run, work_dir));
  } catch (const Error& e) {
    std::cerr << "acceptance aborted: " << e.what() << '\n';
    return 2;
  }

  json summary = json::array();
  for (const auto& v : verdicts)
    summary.push_back({{"criterion", v.number}, {"pass", v.pass}, {"detail", v.detail}, {"seconds", v.seconds}});
  write_file_bytes(work_dir / "acceptance.json", summary.dump(2) + "\n");
  std::cout << "\nsummary\n";
  for (const auto& v : verdicts) std::cout << "criterion " << v.number << ": " << (v.pass ? "PASS" : "FAIL") << '\n';
  const bool all = std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
  return all ? 0 : 1;
}
