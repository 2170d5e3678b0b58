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

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "alvtts/evalkit/evalkit.hpp"
#include "support.hpp"

namespace alvtts::evalkit {
namespace {

using corpus::PhonemeRange;
using testing::error_kind_of;

std::vector<PhonemeRange> pairs(int morae) {
  std::vector<PhonemeRange> out;
  for (int m = 0; m < morae; ++m) out.push_back({2 * m, 2 * m + 2});
  return out;
}

TEST(MoraMajority, TieGoesToVowel) {
  EXPECT_EQ(mora_majority({2, 3, 1, 1}, pairs(2)), (std::vector<int>{3, 1}));
  EXPECT_EQ(mora_majority({0, 0, 2}, {{0, 3}}), (std::vector<int>{0}));
}

TEST(OracleAccuracy, PerfectUnderSomeMappingIsOne) {
  OracleSample s{{2, 2, 0, 0, 2, 2, 1, 1}, pairs(4), "HLHL", {}};
  auto r = alv_oracle_accuracy({s}, {s}, 4);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.mapping(2), 1);
}

TEST(OracleAccuracy, HandCountedFourMoraCase) {
  // Mora majorities 0,1,2,1 against HLLH: class 1 sees one L and one H, so at most 3 of 4 match.
  OracleSample s{{0, 0, 1, 1, 2, 2, 1, 1}, pairs(4), "HLLH", {}};
  auto r = alv_oracle_accuracy({s}, {s}, 4);
  EXPECT_EQ(r.matched, 3u);
  EXPECT_EQ(r.total, 4u);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  auto given = alv_oracle_accuracy({s}, ClassMapping{{1, 0, 0, 0}});
  EXPECT_EQ(given.matched, 3u);
  EXPECT_EQ(given.mapping.describe(), "HLLL");
}

TEST(OracleAccuracy, ScoredMaskRestrictsMorae) {
  OracleSample s{{0, 0, 1, 1, 2, 2, 1, 1}, pairs(4), "HLLH", {true, false, false, true}};
  auto r = alv_oracle_accuracy({s}, ClassMapping{{0, 0, 0, 0}});
  EXPECT_EQ(r.total, 2u);
  EXPECT_EQ(r.matched, 0u);
}

OracleSample random_sample(std::mt19937_64& rng, int morae) {
  OracleSample s;
  s.morae = pairs(morae);
  for (int m = 0; m < morae; ++m) {
    const int a = static_cast<int>(rng() % 4);
    s.alvs.push_back(a);
    s.alvs.push_back(a);
    s.oracle += (rng() % 2) ? 'H' : 'L';
  }
  return s;
}

TEST(OracleAccuracy, RandomAlvsScoreChance) {
  std::mt19937_64 rng(3);
  std::vector<OracleSample> calib, test;
  for (int i = 0; i < 100; ++i) calib.push_back(random_sample(rng, 10));
  for (int i = 0; i < 1000; ++i) test.push_back(random_sample(rng, 10));
  auto r = alv_oracle_accuracy(calib, test, 4);
  EXPECT_EQ(r.total, 10000u);
  EXPECT_NEAR(r.accuracy, 0.5, 0.05);
}

TEST(OracleAccuracy, InvariantUnderAlvPermutation) {
  std::mt19937_64 rng(4);
  std::vector<OracleSample> calib;
  for (int i = 0; i < 30; ++i) {
    auto s = random_sample(rng, 6);
    for (std::size_t m = 0; m < s.oracle.size(); ++m)
      if (rng() % 3) s.oracle[m] = (s.alvs[2 * m] % 2) ? 'H' : 'L';
    calib.push_back(s);
  }
  const double base = alv_oracle_accuracy(calib, calib, 4).accuracy;
  EXPECT_GT(base, 0.6);
  std::vector<int> perm = {0, 1, 2, 3};
  while (std::next_permutation(perm.begin(), perm.end())) {
    auto pc = calib;
    for (auto& s : pc)
      for (auto& a : s.alvs) a = perm[static_cast<std::size_t>(a)];
    EXPECT_DOUBLE_EQ(alv_oracle_accuracy(pc, pc, 4).accuracy, base);
  }
}

TEST(OracleAccuracy, MissingLabelsAreAnInputError) {
  OracleSample s{{0, 0, 1, 1}, pairs(2), "H", {}};
  EXPECT_EQ(error_kind_of([&] { alv_oracle_accuracy({s}, {s}, 4); }), ErrorKind::kInput);
}

TEST(ImpliedAccent, AboveMeanOfMoraMeans) {
  std::vector<double> f0 = {5.6, 5.6, 5.1, 5.1, 5.1, 5.3};
  EXPECT_EQ(implied_accent(f0, {1, 1, 2, 2}, {{0, 2}, {2, 3}, {3, 4}}), "HLL");
  EXPECT_EQ(error_kind_of([&] { implied_accent(f0, {1, 1}, {{0, 2}}); }), ErrorKind::kInput);
}

TEST(PatternAccuracy, CountsMatchesUnderMask) {
  auto r = pattern_accuracy({"HLH", "LL"}, {"HHH", "LH"}, {{}, {true, false}});
  EXPECT_EQ(r.total, 4u);
  EXPECT_EQ(r.matched, 3u);
}

TEST(LogF0ByAlv, SingleClassMeanIsGlobalPhonemeMean) {
  AlvF0Sample s{{2, 2, 2}, corpus::Alignment::from_durations({1, 2, 1}), {5.0, 5.2, 5.4, 6.0}, {}};
  auto r = logf0_by_alv({s}, 4);
  EXPECT_EQ(r.classes[2].count, 3u);
  EXPECT_NEAR(r.classes[2].mean, (5.0 + 5.3 + 6.0) / 3.0, 1e-12);
  for (int a : {0, 1, 3}) EXPECT_EQ(r.classes[static_cast<std::size_t>(a)].count, 0u);
  EXPECT_FALSE(r.ordering.exists);
}

TEST(LogF0ByAlv, TwoConstantClasses) {
  AlvF0Sample s{{1, 0, 1}, corpus::Alignment::from_durations({2, 2, 1}), {5.6, 5.6, 5.1, 5.1, 5.6}, {}};
  auto r = logf0_by_alv({s}, 2);
  EXPECT_NEAR(r.classes[0].mean, 5.1, 1e-12);
  EXPECT_NEAR(r.classes[1].mean, 5.6, 1e-12);
  EXPECT_TRUE(r.ordering.exists);
  EXPECT_EQ(r.ordering.order, (std::vector<int>{0, 1}));
  EXPECT_NEAR(r.ordering.min_gap, 0.5, 1e-12);
}

TEST(LogF0ByAlv, UnvoicedPhonemesAreExcluded) {
  AlvF0Sample s{{0, 1}, corpus::Alignment::from_durations({1, 1}), {5.0, 0.0}, {true, false}};
  auto r = logf0_by_alv({s}, 2);
  EXPECT_EQ(r.excluded_phonemes, 1u);
  EXPECT_EQ(r.points.size(), 1u);
}

TEST(LogF0ByAlv, QuartilesInterpolate) {
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
}

TEST(LogF0ByAlv, OutputFiles) {
  AlvF0Sample s{{1, 0}, corpus::Alignment::from_durations({1, 1}), {5.5, 5.0}, {}};
  auto r = logf0_by_alv({s}, 2);
  const auto csv = format_points_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "alv_class,log_f0");
  EXPECT_NE(format_stats_tsv(r).find("\n"), std::string::npos);
}

TEST(Cosine, IdenticalAndNegated) {
  Eigen::VectorXd v(3);
  v << 1.0, -2.0, 0.5;
  EXPECT_NEAR(speaker_similarity(v, {v}), 1.0, 1e-12);
  EXPECT_NEAR(speaker_similarity(Eigen::VectorXd(-v), {v}), -1.0, 1e-12);
  EXPECT_EQ(error_kind_of([&] { cosine_similarity(v, Eigen::VectorXd::Zero(3)); }), ErrorKind::kDegenerate);
}

TEST(Cosine, MatchesDotOverNorms) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(6), b(6);
    for (int i = 0; i < 6; ++i) a(i) = n(rng), b(i) = n(rng);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < 6; ++i) dot += a(i) * b(i), na += a(i) * a(i), nb += b(i) * b(i);
    EXPECT_NEAR(cosine_similarity(a, b), dot / std::sqrt(na * nb), 1e-9);
  }
}

TEST(SpeakerSimilarity, IdenticalSampleIsOne) {
  AcousticSample s{corpus::FrameMatrix(4, 2), {1, 3}};
  s.frames << 5.0f, 0.f, 5.2f, 0.f, 0.0f, 0.f, 5.4f, 0.f;
  ProsodyStatsEmbedder embedder;
  EXPECT_NEAR(speaker_similarity(s, {s}, embedder), 1.0, 1e-12);
  auto e = embedder.embed(s);
  EXPECT_NEAR(e(0), 5.2, 1e-6);
  EXPECT_NEAR(e(2), 2.0, 1e-12);
}

TEST(Bleu, HandExample) {
  auto r = bleu4_detail({{"a", "b", "c", "d", "e"}}, {{{"a", "b", "c", "d", "f"}}});
  EXPECT_NEAR(r.precisions[0], 4.0 / 5.0, 1e-12);
  EXPECT_NEAR(r.precisions[3], 1.0 / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.brevity_penalty, 1.0);
  EXPECT_NEAR(r.score, 0.66874, 1e-4);
  EXPECT_NEAR(r.score, std::pow(0.2, 0.25), 1e-12);
}

TEST(Bleu, IdentityIsOne) {
  Tokens t = {"w1", "w2", "w3", "w4", "w5"};
  EXPECT_NEAR(bleu4(t, {t}), 1.0, 1e-12);
}

TEST(Bleu, ZeroOverlapIsFloorDominated) {
  EXPECT_LT(bleu4(Tokens{"a", "b", "c", "d"}, {Tokens{"w", "x", "y", "z"}}), 1e-8);
}

TEST(Bleu, BrevityPenaltyUsesClosestReference) {
  auto r = bleu4_detail({{"a", "b", "c", "d"}}, {{{"a", "b", "c", "d", "e", "f"}, {"a", "b", "c", "d", "e", "f", "g"}}});
  EXPECT_NEAR(r.brevity_penalty, std::exp(1.0 - 6.0 / 4.0), 1e-12);
}

TEST(Bleu, EmptyInputsAreInputErrors) {
  EXPECT_EQ(error_kind_of([] { bleu4(std::vector<Tokens>{}, {}); }), ErrorKind::kInput);
  EXPECT_EQ(error_kind_of([] { bleu4(Tokens{"a"}, {}); }), ErrorKind::kInput);
}

}  // namespace
}  // namespace alvtts::evalkit
