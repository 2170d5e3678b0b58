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

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "alvtts/corpus/feature_file.hpp"
#include "alvtts/corpus/manifest.hpp"
#include "alvtts/corpus/synthetic.hpp"
#include "alvtts/corpus/types.hpp"
#include "support.hpp"

namespace alvtts::corpus {
namespace {

using testing::error_kind_of;

SyntheticCorpusConfig small_config(std::uint64_t seed = 5) {
  SyntheticCorpusConfig c;
  c.lexicon_size = 12;
  c.sentence_count = 20;
  c.seed = seed;
  return c;
}

TEST(G2p, EmptyAndSingleWord) {
  Lexicon lex;
  lex.add("kato", {{"k", "a", "t", "o"}, 2});
  EXPECT_TRUE(g2p_lookup({}, lex).empty());
  EXPECT_EQ(g2p_lookup({"kato"}, lex), (std::vector<std::string>{"k", "a", "t", "o"}));
  EXPECT_EQ(error_kind_of([&] { g2p_lookup({"nope"}, lex); }), ErrorKind::kVocabulary);
}

TEST(G2p, ConcatenatesRandomLexica) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto corpus = generate_synthetic_corpus(small_config(rng()));
    const auto& words = corpus.lexicon.words();
    std::vector<std::string> sentence;
    std::vector<std::string> expected;
    for (int k = 0; k < 4; ++k) {
      const auto& w = words[rng() % words.size()];
      sentence.push_back(w);
      const auto& p = corpus.lexicon.at(w).phonemes;
      expected.insert(expected.end(), p.begin(), p.end());
    }
    EXPECT_EQ(g2p_lookup(sentence, corpus.lexicon), expected);
  }
}

TEST(Ranges, WordAndMoraRangesPartitionPhonemes) {
  Lexicon lex;
  lex.add("ka", {{"k", "a"}, 1});
  lex.add("sumi", {{"s", "u", "m", "i"}, 2});
  auto words = word_ranges({"ka", "sumi"}, lex);
  ASSERT_EQ(words.size(), 2u);
  EXPECT_EQ(words[1].begin, 2);
  EXPECT_EQ(words[1].end, 6);
  auto morae = mora_ranges({"ka", "sumi"}, lex);
  ASSERT_EQ(morae.size(), 3u);
  EXPECT_EQ(morae[2].begin, 4);
  EXPECT_EQ(morae[2].size(), 2);
}

TEST(FeatureFile, RoundTripAndHeaderChecks) {
  FrameMatrix m = FrameMatrix::Random(5, 3);
  std::string bytes = encode_feature_file(m);
  EXPECT_EQ(bytes.size(), 12u + 15u * 4u);
  EXPECT_TRUE(decode_feature_file(bytes) == m);
  EXPECT_EQ(error_kind_of([&] { decode_feature_file(bytes.substr(0, bytes.size() - 4)); }), ErrorKind::kFormat);
  bytes[1] = 'X';
  EXPECT_EQ(error_kind_of([&] { decode_feature_file(bytes); }), ErrorKind::kFormat);
}

TEST(Manifest, GeneratedCorpusRoundTrips) {
  testing::TempDir dir("manifest");
  auto corpus = generate_synthetic_corpus(small_config());
  save_manifest(corpus.manifest, dir / "m.tsv");
  EXPECT_EQ(load_manifest(dir / "m.tsv"), corpus.manifest);
}

TEST(Manifest, LineCountMatchesUtteranceCount) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto cfg = small_config(rng());
    cfg.sentence_count = 1 + static_cast<int>(rng() % 30);
    auto corpus = generate_synthetic_corpus(cfg);
    std::istringstream in(format_manifest(corpus.manifest));
    EXPECT_EQ(parse_manifest(in).size(), static_cast<std::size_t>(cfg.sentence_count));
  }
}

TEST(Manifest, OverlappingSpansAreAValidationError) {
  std::istringstream in("u1\tspk\tDLA\tka\tk a\t0:0:3;1:2:5\tf.alvf\n");
  EXPECT_EQ(error_kind_of([&] { parse_manifest(in); }), ErrorKind::kValidation);
}

TEST(Manifest, ParseErrorNamesTheLine) {
  std::istringstream in("u1\tspk\tDLA\tka\tk a\t0:0:3;1:3:5\tf.alvf\nbroken line\n");
  try {
    parse_manifest(in);
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Manifest, OptionalOracleColumn) {
  std::istringstream in("u1\tspk\tDLA\tka\tk a\t0:0:3;1:3:5\tf.alvf\n");
  auto m = parse_manifest(in);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_FALSE(m[0].oracle_accent.has_value());
  EXPECT_EQ(m[0].alignment.durations(), (std::vector<int>{3, 2}));
}

TEST(Synthetic, SameSeedGivesByteIdenticalManifest) {
  auto a = generate_synthetic_corpus(small_config(9));
  auto b = generate_synthetic_corpus(small_config(9));
  EXPECT_EQ(format_manifest(a.manifest), format_manifest(b.manifest));
  for (std::size_t i = 0; i < a.features.size(); ++i) EXPECT_TRUE(a.features[i] == b.features[i]);
}

TEST(Synthetic, DivergentWordCountIsFloorOfFraction) {
  auto cfg = small_config();
  cfg.lexicon_size = 40;
  cfg.divergent_fraction = 0.5;
  auto corpus = generate_synthetic_corpus(cfg);
  const auto& a = corpus.rule_tables.at(DialectId("DLA"));
  const auto& b = corpus.rule_tables.at(DialectId("DLB"));
  EXPECT_EQ(divergent_words(a, b).size(), 20u);
  a.validate(corpus.lexicon);
  b.validate(corpus.lexicon);
}

TEST(Synthetic, ZeroDivergenceGivesIdenticalTables) {
  auto cfg = small_config();
  cfg.divergent_fraction = 0.0;
  auto corpus = generate_synthetic_corpus(cfg);
  EXPECT_EQ(corpus.rule_tables.at(DialectId("DLA")).rules, corpus.rule_tables.at(DialectId("DLB")).rules);
}

TEST(Synthetic, LexiconDoesNotDependOnDivergence) {
  auto cfg = small_config();
  auto full = generate_synthetic_corpus(cfg);
  cfg.divergent_fraction = 0.0;
  EXPECT_EQ(generate_synthetic_corpus(cfg).lexicon, full.lexicon);
}

TEST(Synthetic, OracleLabelsFollowSpeakerDialect) {
  auto corpus = generate_synthetic_corpus(small_config());
  for (const auto& u : corpus.manifest) {
    EXPECT_EQ(u.dialect, DialectId(u.speaker_id == "spkA" ? "DLA" : "DLB"));
    EXPECT_EQ(*u.oracle_accent, corpus.rule_tables.at(u.dialect).sentence_pattern(u.graphemes));
  }
}

double mora_mean(const FrameMatrix& frames, const Alignment& a, const PhonemeRange& r) {
  double sum = 0.0;
  int n = 0;
  for (int p = r.begin; p < r.end; ++p)
    for (int t = a.spans[p].start_frame; t < a.spans[p].end_frame; ++t) {
      sum += frames(t, 0);
      ++n;
    }
  return sum / n;
}

double mora_mean_oracle(const SyntheticCorpusConfig& cfg, const SpeakerSpec& spk, char label, const Alignment& a,
                        const PhonemeRange& r) {
  const double target = (label == 'H' ? cfg.high_logf0 : cfg.low_logf0) + spk.log_f0_offset;
  double seconds = 0.0;
  int n = 0;
  for (int p = r.begin; p < r.end; ++p)
    for (int t = a.spans[p].start_frame; t < a.spans[p].end_frame; ++t) {
      seconds += t / cfg.frame_rate;
      ++n;
    }
  return target + cfg.declination_per_second * seconds / n;
}

TEST(Synthetic, RainContrastIsExactWithoutNoise) {
  auto cfg = small_config();
  cfg.noise_std = 0.0;
  Lexicon lex;
  lex.add("rain", {{"r", "a", "i", "n"}, 2});
  AccentRuleTable a{DialectId("DLA"), {{"rain", "HL"}}};
  AccentRuleTable b{DialectId("DLB"), {{"rain", "LH"}}};
  std::mt19937_64 rng(1);
  const auto spectral = make_spectral_model(cfg, rng);
  for (const auto& [rules, spk] : {std::pair{a, cfg.speakers[0]}, std::pair{b, cfg.speakers[1]}}) {
    auto [u, frames] = render_utterance("u", {"rain"}, spk, rules, lex, spectral, cfg, rng);
    const auto morae = mora_ranges(u.graphemes, lex);
    const double m1 = mora_mean(frames, u.alignment, morae[0]);
    const double m2 = mora_mean(frames, u.alignment, morae[1]);
    EXPECT_NEAR(m1, mora_mean_oracle(cfg, spk, rules.rules.at("rain")[0], u.alignment, morae[0]), 1e-5);
    EXPECT_NEAR(m2, mora_mean_oracle(cfg, spk, rules.rules.at("rain")[1], u.alignment, morae[1]), 1e-5);
    if (rules.dialect == DialectId("DLA")) EXPECT_GT(m1, m2);
    else EXPECT_LT(m1, m2);
  }
}

TEST(Synthetic, EveryMoraMatchesOracleWithoutNoise) {
  auto cfg = small_config();
  cfg.noise_std = 0.0;
  auto corpus = generate_synthetic_corpus(cfg);
  for (std::size_t i = 0; i < corpus.manifest.size(); ++i) {
    const auto& u = corpus.manifest[i];
    const auto& spk = cfg.speakers[u.speaker_id == "spkA" ? 0 : 1];
    const auto morae = mora_ranges(u.graphemes, corpus.lexicon);
    for (std::size_t m = 0; m < morae.size(); ++m)
      EXPECT_NEAR(mora_mean(corpus.features[i], u.alignment, morae[m]),
                  mora_mean_oracle(cfg, spk, (*u.oracle_accent)[m], u.alignment, morae[m]), 1e-5);
  }
}

TEST(CorpusDirectory, WriteThenLoadIsIdentity) {
  testing::TempDir dir("corpusdir");
  auto cfg = small_config();
  auto corpus = generate_synthetic_corpus(cfg);
  write_corpus_directory(corpus, cfg, dir.path());
  auto bundle = load_corpus_directory(dir.path());
  EXPECT_EQ(bundle.manifest, corpus.manifest);
  EXPECT_EQ(bundle.lexicon, corpus.lexicon);
  EXPECT_EQ(bundle.rule_tables, corpus.rule_tables);
  EXPECT_EQ(bundle.dialects, corpus.dialects);
  for (std::size_t i = 0; i < corpus.manifest.size(); ++i)
    EXPECT_TRUE(bundle.read_features(bundle.manifest[i]) == corpus.features[i]);
}

TEST(Split, PartitionsPerSpeakerDeterministically) {
  auto cfg = small_config();
  cfg.sentence_count = 100;
  auto corpus = generate_synthetic_corpus(cfg);
  auto s = split_corpus(corpus.manifest, 4);
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), 100u);
  EXPECT_EQ(s.test.size(), 10u);
  std::vector<std::size_t> all;
  for (auto* v : {&s.train, &s.validation, &s.test}) all.insert(all.end(), v->begin(), v->end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(split_corpus(corpus.manifest, 4).test, s.test);
}

TEST(Config, RejectsBadValues) {
  auto cfg = small_config();
  cfg.divergent_fraction = 1.5;
  EXPECT_EQ(error_kind_of([&] { cfg.validate(); }), ErrorKind::kConfig);
  cfg = small_config();
  cfg.speakers[1].dialect = DialectId("DLA");
  EXPECT_EQ(error_kind_of([&] { cfg.validate(); }), ErrorKind::kConfig);
}

}  // namespace
}  // namespace alvtts::corpus
