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

// Objective metrics: ALV accuracy against oracle accents, log-F0 distribution
// by ALV class, embedding-cosine speaker similarity, corpus BLEU-4.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "alvtts/corpus/feature_file.hpp"
#include "alvtts/corpus/types.hpp"
#include "alvtts/error.hpp"

namespace alvtts::evalkit {

/// ALV index -> label. For accent scoring the labels are 0 (L) and 1 (H);
/// for pitch ordering they are ranks.
struct ClassMapping {
  std::vector<int> assignment;

  int operator()(int alv) const {
    require(alv >= 0 && alv < static_cast<int>(assignment.size()), ErrorKind::kInput,
            "ALV index " + std::to_string(alv) + " outside mapping");
    return assignment[static_cast<std::size_t>(alv)];
  }
  std::string describe() const {
    std::string s;
    for (int a : assignment) s += a == 1 ? 'H' : 'L';
    return s;
  }
};

/// Majority ALV per mora; on a tie the mora's last phoneme (the vowel) decides.
inline std::vector<int> mora_majority(const std::vector<int>& alvs, const std::vector<corpus::PhonemeRange>& morae) {
  std::vector<int> out;
  out.reserve(morae.size());
  for (const auto& m : morae) {
    require(m.begin >= 0 && m.begin < m.end && m.end <= static_cast<int>(alvs.size()), ErrorKind::kInput,
            "mora range outside ALV sequence");
    std::map<int, int> votes;
    for (int p = m.begin; p < m.end; ++p) ++votes[alvs[static_cast<std::size_t>(p)]];
    int best_count = 0;
    for (const auto& [a, c] : votes) best_count = std::max(best_count, c);
    int winner = alvs[static_cast<std::size_t>(m.end - 1)];
    if (votes[winner] != best_count)
      for (const auto& [a, c] : votes)
        if (c == best_count) {
          winner = a;
          break;
        }
    out.push_back(winner);
  }
  return out;
}

/// One utterance worth of scoring input. `scored` (optional, one flag per mora)
/// restricts the evaluation to a subset of morae, e.g. divergent words.
struct OracleSample {
  std::vector<int> alvs;
  std::vector<corpus::PhonemeRange> morae;
  std::string oracle;  // 'H'/'L' per mora
  std::vector<bool> scored;
};

struct AccuracyResult {
  double accuracy = 0.0;
  std::size_t matched = 0;
  std::size_t total = 0;
  ClassMapping mapping;
};

namespace detail {

// counts[alv][label] over scored morae
inline std::vector<std::array<std::size_t, 2>> tally(const std::vector<OracleSample>& samples, int classes) {
  std::vector<std::array<std::size_t, 2>> counts(static_cast<std::size_t>(classes), {0, 0});
  for (const auto& s : samples) {
    require(s.oracle.size() == s.morae.size(), ErrorKind::kInput, "missing oracle labels: " +
                                                                      std::to_string(s.oracle.size()) + " labels for " +
                                                                      std::to_string(s.morae.size()) + " morae");
    require(s.scored.empty() || s.scored.size() == s.morae.size(), ErrorKind::kInput, "scored mask length mismatch");
    const auto majority = mora_majority(s.alvs, s.morae);
    for (std::size_t m = 0; m < majority.size(); ++m) {
      if (!s.scored.empty() && !s.scored[m]) continue;
      const char label = s.oracle[m];
      require(label == 'H' || label == 'L', ErrorKind::kInput, "oracle label must be H or L");
      require(majority[m] >= 0 && majority[m] < classes, ErrorKind::kInput, "ALV index out of range");
      ++counts[static_cast<std::size_t>(majority[m])][label == 'H' ? 1 : 0];
    }
  }
  return counts;
}

}  // namespace detail

/// Scores with a given mapping.
inline AccuracyResult alv_oracle_accuracy(const std::vector<OracleSample>& samples, const ClassMapping& mapping) {
  const auto counts = detail::tally(samples, static_cast<int>(mapping.assignment.size()));
  AccuracyResult r;
  r.mapping = mapping;
  for (std::size_t a = 0; a < counts.size(); ++a) {
    r.matched += counts[a][static_cast<std::size_t>(mapping.assignment[a] == 1)];
    r.total += counts[a][0] + counts[a][1];
  }
  r.accuracy = r.total ? static_cast<double>(r.matched) / static_cast<double>(r.total) : 0.0;
  return r;
}

/// Best of all 2^K binary labelings on `calibration` (first maximum in
/// enumeration order).
inline ClassMapping fit_optimal_mapping(const std::vector<OracleSample>& calibration, int classes) {
  require(classes >= 1 && classes <= 20, ErrorKind::kInput, "class count out of range");
  const auto counts = detail::tally(calibration, classes);
  ClassMapping best;
  std::size_t best_matched = 0;
  for (unsigned bits = 0; bits < (1u << classes); ++bits) {
    std::size_t matched = 0;
    std::vector<int> assignment(static_cast<std::size_t>(classes));
    for (int a = 0; a < classes; ++a) {
      assignment[static_cast<std::size_t>(a)] = static_cast<int>((bits >> a) & 1u);
      matched += counts[static_cast<std::size_t>(a)][(bits >> a) & 1u];
    }
    if (bits == 0 || matched > best_matched) {
      best_matched = matched;
      best.assignment = std::move(assignment);
    }
  }
  return best;
}

/// Mapping fitted on `calibration`, frozen, then applied to `test`.
inline AccuracyResult alv_oracle_accuracy(const std::vector<OracleSample>& calibration,
                                          const std::vector<OracleSample>& test, int classes) {
  return alv_oracle_accuracy(test, fit_optimal_mapping(calibration, classes));
}

/// Accent implied by a log-F0 track: a mora is H when its mean log-F0 exceeds
/// the mean over the utterance's mora means.
inline std::string implied_accent(const std::vector<double>& frame_log_f0, const std::vector<int>& durations,
                                  const std::vector<corpus::PhonemeRange>& morae) {
  std::vector<std::size_t> start(durations.size() + 1, 0);
  for (std::size_t p = 0; p < durations.size(); ++p) start[p + 1] = start[p] + static_cast<std::size_t>(durations[p]);
  require(start.back() == frame_log_f0.size(), ErrorKind::kInput, "durations do not cover the log-F0 track");
  std::vector<double> means;
  for (const auto& m : morae) {
    require(m.begin >= 0 && m.end <= static_cast<int>(durations.size()), ErrorKind::kInput,
            "mora range outside durations");
    const std::size_t b = start[static_cast<std::size_t>(m.begin)], e = start[static_cast<std::size_t>(m.end)];
    require(e > b, ErrorKind::kInput, "mora spans no frames");
    means.push_back(std::accumulate(frame_log_f0.begin() + static_cast<long>(b),
                                    frame_log_f0.begin() + static_cast<long>(e), 0.0) /
                    static_cast<double>(e - b));
  }
  const double center = means.empty() ? 0.0 : std::accumulate(means.begin(), means.end(), 0.0) / means.size();
  std::string out;
  for (double v : means) out += v > center ? 'H' : 'L';
  return out;
}

/// Fraction of (optionally masked) positions where two H/L strings agree.
inline AccuracyResult pattern_accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& oracle,
                                       const std::vector<std::vector<bool>>& scored = {}) {
  require(predicted.size() == oracle.size(), ErrorKind::kInput, "prediction/oracle count mismatch");
  AccuracyResult r;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    require(predicted[i].size() == oracle[i].size(), ErrorKind::kInput, "missing oracle labels");
    for (std::size_t m = 0; m < oracle[i].size(); ++m) {
      if (!scored.empty() && !scored[i].empty() && !scored[i][m]) continue;
      ++r.total;
      r.matched += predicted[i][m] == oracle[i][m];
    }
  }
  r.accuracy = r.total ? static_cast<double>(r.matched) / static_cast<double>(r.total) : 0.0;
  return r;
}

// --- log-F0 by ALV -----------------------------------------------------------

struct ClassStats {
  int alv = 0;
  std::size_t count = 0;
  double mean = 0.0, std = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0;
};

struct Ordering {
  bool exists = false;       // strictly increasing permutation over nonempty classes
  double min_gap = 0.0;      // smallest adjacent difference in that order
  std::vector<int> order;    // ALV indices sorted by mean
};

struct LogF0ByAlv {
  std::vector<ClassStats> classes;
  std::vector<std::pair<int, double>> points;
  std::size_t excluded_phonemes = 0;  // no voiced frame
  Ordering ordering;
};

/// One utterance: per-phoneme ALVs, alignment into `log_f0`, voicing per frame
/// (empty means all voiced).
struct AlvF0Sample {
  std::vector<int> alvs;
  corpus::Alignment alignment;
  std::vector<double> log_f0;
  std::vector<bool> voiced;
};

/// Linear-interpolated quantile of sorted data.
inline double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Ordering increasing_ordering(const std::vector<std::pair<int, double>>& class_means) {
  Ordering o;
  auto sorted = class_means;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  for (const auto& [a, m] : sorted) o.order.push_back(a);
  if (sorted.size() < 2) return o;
  o.min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < sorted.size(); ++i) o.min_gap = std::min(o.min_gap, sorted[i].second - sorted[i - 1].second);
  o.exists = o.min_gap > 0.0;
  return o;
}

inline LogF0ByAlv logf0_by_alv(const std::vector<AlvF0Sample>& samples, int classes) {
  require(classes >= 1, ErrorKind::kInput, "class count must be positive");
  LogF0ByAlv out;
  std::vector<std::vector<double>> buckets(static_cast<std::size_t>(classes));
  for (const auto& s : samples) {
    require(s.alvs.size() == s.alignment.spans.size(), ErrorKind::kInput, "ALV count differs from phoneme count");
    require(s.voiced.empty() || s.voiced.size() == s.log_f0.size(), ErrorKind::kInput, "voicing length mismatch");
    for (std::size_t p = 0; p < s.alvs.size(); ++p) {
      const auto& span = s.alignment.spans[p];
      require(span.end_frame <= static_cast<int>(s.log_f0.size()), ErrorKind::kAlignment, "span outside log-F0 track");
      require(s.alvs[p] >= 0 && s.alvs[p] < classes, ErrorKind::kInput, "ALV index out of range");
      double sum = 0.0;
      int n = 0;
      for (int t = span.start_frame; t < span.end_frame; ++t)
        if (s.voiced.empty() || s.voiced[static_cast<std::size_t>(t)]) {
          sum += s.log_f0[static_cast<std::size_t>(t)];
          ++n;
        }
      if (n == 0) {
        ++out.excluded_phonemes;
        continue;
      }
      buckets[static_cast<std::size_t>(s.alvs[p])].push_back(sum / n);
      out.points.emplace_back(s.alvs[p], sum / n);
    }
  }
  std::vector<std::pair<int, double>> means;
  for (int a = 0; a < classes; ++a) {
    auto values = buckets[static_cast<std::size_t>(a)];
    ClassStats st;
    st.alv = a;
    st.count = values.size();
    if (!values.empty()) {
      std::sort(values.begin(), values.end());
      st.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - st.mean) * (v - st.mean);
      st.std = std::sqrt(ss / static_cast<double>(values.size()));
      st.q1 = quantile(values, 0.25);
      st.median = quantile(values, 0.5);
      st.q3 = quantile(values, 0.75);
      means.emplace_back(a, st.mean);
    }
    out.classes.push_back(st);
  }
  out.ordering = increasing_ordering(means);
  return out;
}

inline std::string format_points_csv(const LogF0ByAlv& r) {
  std::ostringstream os;
  os.precision(9);
  os << "alv_class,log_f0\n";
  for (const auto& [a, v] : r.points) os << a << ',' << v << '\n';
  return os.str();
}

inline std::string format_stats_tsv(const LogF0ByAlv& r) {
  std::ostringstream os;
  os.precision(9);
  os << "alv_class\tcount\tmean\tstd\tq1\tmedian\tq3\n";
  for (const auto& c : r.classes)
    os << c.alv << '\t' << c.count << '\t' << c.mean << '\t' << c.std << '\t' << c.q1 << '\t' << c.median << '\t' << c.q3
       << '\n';
  return os.str();
}

// --- speaker similarity --------------------------------------------------------

/// Acoustic frames (channel 0 = log-F0, <= 0 unvoiced) with per-phoneme durations.
struct AcousticSample {
  corpus::FrameMatrix frames;
  std::vector<int> durations;
};

class SpeakerEmbedder {
 public:
  virtual ~SpeakerEmbedder() = default;
  virtual Eigen::VectorXd embed(const AcousticSample& sample) const = 0;
};

/// (mean log-F0, std log-F0, mean frames per phoneme, std frames per phoneme).
class ProsodyStatsEmbedder final : public SpeakerEmbedder {
 public:
  Eigen::VectorXd embed(const AcousticSample& sample) const override {
    require(sample.frames.rows() > 0 && sample.frames.cols() > 0, ErrorKind::kInput, "empty acoustic sample");
    require(!sample.durations.empty(), ErrorKind::kInput, "no phoneme durations");
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (Eigen::Index t = 0; t < sample.frames.rows(); ++t) {
      const double v = sample.frames(t, 0);
      if (!(v > 0.0) || !std::isfinite(v)) continue;
      sum += v;
      sq += v * v;
      ++n;
    }
    require(n > 0, ErrorKind::kDegenerate, "no voiced frames to embed");
    const double mean = sum / n;
    const double dmean = std::accumulate(sample.durations.begin(), sample.durations.end(), 0.0) /
                         static_cast<double>(sample.durations.size());
    double dss = 0.0;
    for (int d : sample.durations) dss += (d - dmean) * (d - dmean);
    Eigen::VectorXd e(4);
    e << mean, std::sqrt(std::max(0.0, sq / n - mean * mean)), dmean,
        std::sqrt(dss / static_cast<double>(sample.durations.size()));
    return e;
  }
};

inline double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require(a.size() == b.size(), ErrorKind::kInput, "embedding width mismatch");
  const double na = a.norm(), nb = b.norm();
  require(na > 0.0 && nb > 0.0, ErrorKind::kDegenerate, "undefined similarity: zero-norm embedding");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Cosine between the synthetic embedding and the mean reference embedding.
inline double speaker_similarity(const Eigen::VectorXd& synth, const std::vector<Eigen::VectorXd>& references) {
  require(!references.empty(), ErrorKind::kInput, "empty reference set");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(synth.size());
  for (const auto& r : references) {
    require(r.size() == synth.size(), ErrorKind::kInput, "embedding width mismatch");
    mean += r;
  }
  mean /= static_cast<double>(references.size());
  return cosine_similarity(synth, mean);
}

inline double speaker_similarity(const AcousticSample& synth, const std::vector<AcousticSample>& references,
                                 const SpeakerEmbedder& embedder) {
  require(!references.empty(), ErrorKind::kInput, "empty reference set");
  std::vector<Eigen::VectorXd> embeds;
  for (const auto& r : references) embeds.push_back(embedder.embed(r));
  return speaker_similarity(embedder.embed(synth), embeds);
}

// --- BLEU ----------------------------------------------------------------------

using Tokens = std::vector<std::string>;

inline constexpr double kBleuPrecisionFloor = 1e-9;

namespace detail {

inline std::map<Tokens, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<Tokens, std::size_t> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n))];
  return out;
}

}  // namespace detail

struct BleuResult {
  double score = 0.0;
  double brevity_penalty = 1.0;
  std::array<double, 4> precisions{};
};

/// Corpus-level BLEU-4 with clipped counts, closest-length brevity penalty and a
/// precision floor for orders without matches. An order with no candidate
/// n-grams at all contributes precision 1.
inline BleuResult bleu4_detail(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references) {
  require(!candidates.empty(), ErrorKind::kInput, "no candidates");
  require(candidates.size() == references.size(), ErrorKind::kInput, "candidate/reference count mismatch");
  std::array<std::size_t, 4> matched{}, total{};
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    require(!c.empty(), ErrorKind::kInput, "empty candidate");
    require(!references[i].empty(), ErrorKind::kInput, "empty reference set");
    cand_len += c.size();
    std::size_t best = references[i].front().size();
    for (const auto& r : references[i]) {
      const auto d = [&](std::size_t len) { return len > c.size() ? len - c.size() : c.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += best;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cand = detail::ngram_counts(c, n);
      std::map<Tokens, std::size_t> max_ref;
      for (const auto& r : references[i])
        for (const auto& [g, k] : detail::ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
      for (const auto& [g, k] : cand) {
        total[n - 1] += k;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[n - 1] += std::min(k, it->second);
      }
    }
  }
  BleuResult r;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double p = total[n] == 0 ? 1.0 : static_cast<double>(matched[n]) / static_cast<double>(total[n]);
    p = std::max(p, kBleuPrecisionFloor);
    r.precisions[n] = p;
    log_sum += std::log(p) / 4.0;
  }
  r.brevity_penalty = cand_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  r.score = r.brevity_penalty * std::exp(log_sum);
  return r;
}

inline double bleu4(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references) {
  return bleu4_detail(candidates, references).score;
}

inline double bleu4(const Tokens& candidate, const std::vector<Tokens>& references) {
  return bleu4(std::vector<Tokens>{candidate}, std::vector<std::vector<Tokens>>{references});
}

}  // namespace alvtts::evalkit
