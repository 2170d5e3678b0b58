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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "alvtts/alvpredictor/alvpredictor.hpp"
#include "alvtts/corpus/synthetic.hpp"
#include "support.hpp"

namespace alvtts::alvpredictor {
namespace {

using corpus::DialectId;
using mdplbert::BertConfig;
using mdplbert::Vocabulary;

BertConfig tiny_bert(std::uint64_t seed = 5) {
  BertConfig c;
  c.layers = 1;
  c.heads = 2;
  c.hidden = 16;
  c.ff_width = 32;
  c.max_length = 48;
  c.seed = seed;
  return c;
}

struct Fixture {
  corpus::SyntheticCorpus corpus;
  Vocabulary vocab;
  std::vector<Example> train, validation;
};

// Targets depend on the dialect and the oracle accent, so they are learnable from text.
Fixture make_fixture() {
  corpus::SyntheticCorpusConfig cfg;
  cfg.lexicon_size = 12;
  cfg.sentence_count = 160;
  cfg.max_words = 4;
  Fixture f;
  f.corpus = corpus::generate_synthetic_corpus(cfg);
  f.vocab = Vocabulary({"DLA", "DLB"}, corpus::phoneme_inventory(), f.corpus.lexicon.words());
  for (std::size_t i = 0; i < f.corpus.manifest.size(); ++i) {
    const auto& u = f.corpus.manifest[i];
    Example ex{mdplbert::build_inputs(u.graphemes, u.dialect, f.corpus.lexicon, f.vocab), {}};
    const auto morae = corpus::mora_ranges(u.graphemes, f.corpus.lexicon);
    for (std::size_t m = 0; m < morae.size(); ++m)
      for (int p = morae[m].begin; p < morae[m].end; ++p) ex.targets.push_back((*u.oracle_accent)[m] == 'H' ? 3 : 1);
    (i % 5 == 0 ? f.validation : f.train).push_back(std::move(ex));
  }
  return f;
}

TEST(Celoss, OneHotIsZero) {
  ALVDistributionSequence p = ALVDistributionSequence::Zero(3, 4);
  p(0, 1) = p(1, 0) = p(2, 3) = 1.0;
  EXPECT_EQ(celoss({1, 0, 3}, p), 0.0);
}

TEST(Celoss, UniformIsLogFour) {
  EXPECT_NEAR(celoss({0, 1, 2, 3}, ALVDistributionSequence::Constant(4, 4, 0.25)), 1.386294, 1e-6);
}

TEST(Celoss, MatchesPerPositionOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    ALVDistributionSequence p(6, 4);
    std::vector<int> z(6);
    double oracle = 0.0;
    for (int r = 0; r < 6; ++r) {
      for (int k = 0; k < 4; ++k) p(r, k) = u(rng);
      p.row(r) /= p.row(r).sum();
      z[static_cast<std::size_t>(r)] = static_cast<int>(rng() % 4);
      oracle -= std::log(p(r, z[static_cast<std::size_t>(r)]));
    }
    EXPECT_NEAR(celoss(z, p), oracle / 6.0, 1e-6);
  }
}

TEST(Celoss, ZeroProbabilityIsFloored) {
  ALVDistributionSequence p = ALVDistributionSequence::Zero(1, 2);
  p(0, 0) = 1.0;
  EXPECT_NEAR(celoss({1}, p), -std::log(kProbabilityFloor), 1e-9);
}

TEST(Predict, OneRowPerPhonemeAndDeterministic) {
  auto f = make_fixture();
  AlvPredictor<float> model(tiny_bert(), f.vocab, 4);
  const auto& u = f.corpus.manifest[0];
  auto a = model.predict(u.graphemes, DialectId("DLB"), f.corpus.lexicon);
  EXPECT_EQ(a.alvs.size(), u.phonemes.size());
  EXPECT_EQ(a.probs.rows(), static_cast<Index>(u.phonemes.size()));
  EXPECT_EQ(a.probs.cols(), 4);
  EXPECT_NEAR(a.probs.row(0).sum(), 1.0, 1e-6);
  auto b = model.predict(u.graphemes, DialectId("DLB"), f.corpus.lexicon);
  EXPECT_EQ(a.alvs, b.alvs);
  EXPECT_TRUE(a.probs == b.probs);
}

TEST(Finetune, ZeroIterationsKeepInitialization) {
  auto f = make_fixture();
  AlvPredictor<float> model(tiny_bert(), f.vocab, 4);
  const auto before = serialize_checkpoint(model.to_checkpoint());
  FinetuneOptions opt;
  opt.iterations = 0;
  finetune(model, f.train, f.validation, opt);
  EXPECT_EQ(serialize_checkpoint(model.to_checkpoint()), before);
}

TEST(Finetune, ValidationLossDrops) {
  auto f = make_fixture();
  AlvPredictor<float> model(tiny_bert(), f.vocab, 4);
  FinetuneOptions opt;
  opt.iterations = 150;
  opt.warmup_steps = 20;
  opt.batch_size = 8;
  opt.eval_every = 25;
  auto report = finetune(model, f.train, f.validation, opt);
  EXPECT_LT(report.best_validation_loss, report.initial_validation_loss);
  EXPECT_NEAR(validate(model, f.validation).loss, report.best_validation_loss, 1e-9);
  EXPECT_EQ(report.train_loss.size(), 150u);
}

TEST(Finetune, TargetLengthMismatchIsAShapeError) {
  auto f = make_fixture();
  AlvPredictor<float> model(tiny_bert(), f.vocab, 4);
  f.train[0].targets.pop_back();
  EXPECT_EQ(testing::error_kind_of([&] { finetune(model, f.train, f.validation, FinetuneOptions{}); }),
            ErrorKind::kShape);
}

TEST(InitializeFrom, CopiesBodyAndRejectsForeignVocabulary) {
  auto f = make_fixture();
  mdplbert::MdPlBert<float> bert(tiny_bert(9), f.vocab);
  AlvPredictor<float> model(tiny_bert(5), f.vocab, 4);
  model.initialize_from(bert);
  EXPECT_TRUE(model.pretrained());
  const auto name = "bert.token_embedding.table";
  EXPECT_TRUE(model.params().find(name)->value() == bert.params().find(name)->value());

  mdplbert::MdPlBert<float> other(tiny_bert(9), Vocabulary({"DLA"}, {"a"}, {}));
  EXPECT_EQ(testing::error_kind_of([&] { model.initialize_from(other); }), ErrorKind::kConfig);
}

TEST(Checkpoint, PredictorRoundTripKeepsProvenance) {
  auto f = make_fixture();
  AlvPredictor<float> scratch(tiny_bert(), f.vocab, 4);
  auto back = AlvPredictor<float>::from_checkpoint(scratch.to_checkpoint());
  EXPECT_FALSE(back.pretrained());
  EXPECT_EQ(serialize_checkpoint(back.to_checkpoint()), serialize_checkpoint(scratch.to_checkpoint()));

  mdplbert::MdPlBert<float> bert(tiny_bert(9), f.vocab);
  AlvPredictor<float> warm(tiny_bert(), f.vocab, 4);
  warm.initialize_from(bert);
  EXPECT_TRUE(AlvPredictor<float>::from_checkpoint(warm.to_checkpoint()).pretrained());
  EXPECT_NE(checkpoint_hash(warm.to_checkpoint()), checkpoint_hash(scratch.to_checkpoint()));
}

}  // namespace
}  // namespace alvtts::alvpredictor
