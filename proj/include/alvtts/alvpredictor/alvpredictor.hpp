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

// ALV predictor: phoneme BERT body + one fully connected layer over K
// classes, applied to every phoneme position (the dialect position is dropped).
// Fine-tuned with cross-entropy against reference-encoder ALVs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "alvtts/checkpoint.hpp"
#include "alvtts/error.hpp"
#include "alvtts/mdplbert/mdplbert.hpp"
#include "alvtts/nn/optim.hpp"
#include "alvtts/quantizer/quantizer.hpp"

namespace alvtts::alvpredictor {

using mdplbert::PhonemeTokenSequence;
using mdplbert::Vocabulary;
using nn::Index;
using nn::Matrix;
using nn::Var;
using quantizer::ALVSequence;

/// P x K row-stochastic matrix.
using ALVDistributionSequence = Matrix<double>;

inline constexpr double kProbabilityFloor = 1e-9;

/// Mean over positions of -log zhat[p][z[p]]; probabilities are floored at 1e-9.
inline double celoss(const ALVSequence& z, const ALVDistributionSequence& zhat) {
  require(static_cast<Index>(z.size()) == zhat.rows(), ErrorKind::kShape,
          "celoss: " + std::to_string(z.size()) + " targets for " + std::to_string(zhat.rows()) + " distributions");
  if (z.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t p = 0; p < z.size(); ++p) {
    require(z[p] >= 0 && z[p] < zhat.cols(), ErrorKind::kShape, "celoss: target class out of range");
    total -= std::log(std::max(zhat(static_cast<Index>(p), z[p]), kProbabilityFloor));
  }
  return total / static_cast<double>(z.size());
}

/// Row-wise argmax, ties to the lowest index.
inline ALVSequence argmax_rows(const ALVDistributionSequence& probs) {
  ALVSequence out(static_cast<std::size_t>(probs.rows()));
  for (Index r = 0; r < probs.rows(); ++r) {
    int best = 0;
    for (Index k = 1; k < probs.cols(); ++k)
      if (probs(r, k) > probs(r, best)) best = static_cast<int>(k);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

struct Prediction {
  ALVSequence alvs;
  ALVDistributionSequence probs;
};

template <typename T = float>
class AlvPredictor {
 public:
  AlvPredictor(mdplbert::BertConfig config, Vocabulary vocab, int classes)
      : vocab_(std::move(vocab)), classes_(classes) {
    require(classes >= 2, ErrorKind::kConfig, "predictor needs at least two ALV classes");
    nn::Rng rng(config.seed);
    body_ = mdplbert::PhonemeBert<T>(params_, config, vocab_.size(), rng);
    head_ = nn::Linear<T>(params_, "alv_head", config.hidden, classes, rng);
  }

  /// Copies the pre-trained body ("bert.*") into this predictor. Vocabularies must agree.
  void initialize_from(const mdplbert::MdPlBert<T>& pretrained) {
    require(pretrained.vocab() == vocab_, ErrorKind::kConfig, "pre-trained BERT vocabulary differs from the predictor's");
    std::size_t copied = params_.copy_matching(pretrained.params());
    require(copied > 0, ErrorKind::kConfig, "pre-trained BERT shares no parameters with the predictor");
    pretrained_ = true;
  }

  /// Class logits for phoneme positions 1..P (P x K).
  Var<T> logits(const PhonemeTokenSequence& seq) const {
    Var<T> h = body_.encode(seq.tokens);
    require(h.rows() >= 1, ErrorKind::kShape, "empty encoding");
    if (h.rows() == 1) return Var<T>(Matrix<T>::Zero(0, classes_));
    return head_(nn::slice_rows(h, 1, h.rows() - 1));
  }

  Prediction predict(const PhonemeTokenSequence& seq) const {
    nn::NoGradGuard guard;
    Prediction out;
    const Var<T> l = logits(seq);
    out.probs = nn::softmax_rows_value(Matrix<double>(l.value().template cast<double>()));
    out.alvs = argmax_rows(out.probs);
    return out;
  }

  Prediction predict(const std::vector<std::string>& graphemes, const corpus::DialectId& dialect,
                     const corpus::Lexicon& lexicon) const {
    return predict(mdplbert::build_inputs(graphemes, dialect, lexicon, vocab_));
  }

  const Vocabulary& vocab() const { return vocab_; }
  int classes() const { return classes_; }
  const mdplbert::BertConfig& config() const { return body_.config(); }
  bool pretrained() const { return pretrained_; }
  nn::ParamRegistry<T>& params() { return params_; }
  const nn::ParamRegistry<T>& params() const { return params_; }

  Checkpoint to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.module = "predictor";
    ckpt.config = {{"bert", config().to_json()},
                   {"vocab", vocab_.to_json()},
                   {"classes", classes_},
                   {"from_scratch", !pretrained_}};
    ckpt.tensors = params_.export_float();
    return ckpt;
  }

  static AlvPredictor from_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.module == "predictor", ErrorKind::kFormat, "not a predictor checkpoint");
    AlvPredictor p(mdplbert::BertConfig::from_json(ckpt.config.at("bert")),
                   Vocabulary::from_json(ckpt.config.at("vocab")), ckpt.config.at("classes").get<int>());
    p.params_.import_float(ckpt.tensors);
    p.pretrained_ = !ckpt.config.value("from_scratch", true);
    return p;
  }

 private:
  Vocabulary vocab_;
  int classes_;
  nn::ParamRegistry<T> params_;
  mdplbert::PhonemeBert<T> body_;
  nn::Linear<T> head_;
  bool pretrained_ = false;
};

/// One fine-tuning example: token sequence and the cached reference-encoder ALVs.
struct Example {
  PhonemeTokenSequence inputs;
  ALVSequence targets;
};

struct FinetuneOptions {
  long iterations = 1000;
  long warmup_steps = 200;
  double learning_rate = 1e-3;
  int batch_size = 16;
  long eval_every = 50;
  std::uint64_t seed = 13;
};

struct FinetuneReport {
  double initial_validation_loss = 0.0;
  double best_validation_loss = 0.0;
  long best_step = 0;
  double validation_accuracy = 0.0;  // of the restored best parameters
  std::vector<double> train_loss;
  std::vector<std::pair<long, double>> validation_curve;
};

struct ValidationResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Position-weighted mean cross-entropy and accuracy over `data`.
template <typename T>
ValidationResult validate(const AlvPredictor<T>& model, const std::vector<Example>& data) {
  double loss = 0.0;
  std::size_t correct = 0, count = 0;
  for (const auto& ex : data) {
    const auto pred = model.predict(ex.inputs);
    loss += celoss(ex.targets, pred.probs) * static_cast<double>(ex.targets.size());
    for (std::size_t p = 0; p < ex.targets.size(); ++p) correct += pred.alvs[p] == ex.targets[p];
    count += ex.targets.size();
  }
  if (count == 0) return {};
  return {loss / static_cast<double>(count), static_cast<double>(correct) / static_cast<double>(count)};
}

/// Adam with linear warm-up/decay on mean per-position CE. Body and head both
/// train; the parameters with the lowest validation loss are restored at the end.
template <typename T>
FinetuneReport finetune(AlvPredictor<T>& model, const std::vector<Example>& train,
                        const std::vector<Example>& validation, const FinetuneOptions& options) {
  require(!train.empty() || options.iterations == 0, ErrorKind::kConfig, "fine-tuning set is empty");
  for (const auto& ex : train)
    require(ex.inputs.size() == ex.targets.size() + 1, ErrorKind::kShape, "example targets must cover every phoneme");
  FinetuneReport report;
  const auto initial = validate(model, validation);
  report.initial_validation_loss = initial.loss;
  report.best_validation_loss = initial.loss;
  report.validation_accuracy = initial.accuracy;
  report.validation_curve.emplace_back(0, initial.loss);
  auto best = model.params().export_float();

  nn::Adam<T> optimizer(model.params());
  nn::LinearWarmupSchedule schedule{options.learning_rate, options.warmup_steps, options.iterations};
  nn::Rng rng(options.seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  for (long step = 1; step <= options.iterations; ++step) {
    std::vector<Var<T>> terms;
    std::size_t positions = 0;
    for (int b = 0; b < options.batch_size; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Example& ex = train[order[cursor++]];
      if (ex.targets.empty()) continue;
      std::vector<int> rows(ex.targets.size());
      for (std::size_t p = 0; p < rows.size(); ++p) rows[p] = static_cast<int>(p);
      terms.push_back(nn::scale(nn::cross_entropy_rows(model.logits(ex.inputs), rows, ex.targets),
                                static_cast<T>(ex.targets.size())));
      positions += ex.targets.size();
    }
    if (terms.empty()) continue;
    Var<T> loss = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) loss = nn::add(loss, terms[i]);
    loss = nn::scale(loss, T(1) / static_cast<T>(positions));
    require(std::isfinite(static_cast<double>(loss.item())), ErrorKind::kNumeric,
            "fine-tuning loss diverged at step " + std::to_string(step));
    report.train_loss.push_back(loss.item());
    nn::backward(loss);
    optimizer.step(schedule(step));
    if (step % options.eval_every == 0 || step == options.iterations) {
      const auto v = validate(model, validation);
      report.validation_curve.emplace_back(step, v.loss);
      if (v.loss < report.best_validation_loss) {
        report.best_validation_loss = v.loss;
        report.best_step = step;
        report.validation_accuracy = v.accuracy;
        best = model.params().export_float();
      }
    }
  }
  model.params().import_float(best);
  return report;
}

}  // namespace alvtts::alvpredictor
