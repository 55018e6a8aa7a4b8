// Copyright 2026 The hlgen Authors.
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

#include <algorithm>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hlgen/error.hpp"
#include "hlgen/textcore.hpp"

// ROUGE-1/2/L, repetition-rate and the repetition-normalized adversarial
// reward. All functions are pure. Scoring is over exact string tokens
// (no stemming, punctuation included) with BOS/EOS markers removed.
namespace hlgen {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

inline RougeScore make_rouge(double precision, double recall) {
  const double denom = precision + recall;
  return {precision, recall, denom > 0 ? 2.0 * precision * recall / denom : 0.0};
}

inline TokenSeq strip_markers(const TokenSeq& seq) {
  TokenSeq out;
  out.reserve(seq.size());
  for (const auto& t : seq)
    if (t != "<s>" && t != "</s>") out.push_back(t);
  return out;
}

inline RougeScore rouge_n(const TokenSeq& hyp_in, const TokenSeq& ref_in, std::size_t n) {
  if (n == 0) throw Error("rouge_n: order must be >= 1");
  const TokenSeq hyp = strip_markers(hyp_in);
  const TokenSeq ref = strip_markers(ref_in);
  auto grams = [n](const TokenSeq& s) {
    std::map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      std::string key;
      for (std::size_t k = 0; k < n; ++k) (key += s[i + k]) += '\x1f';
      ++counts[key];
    }
    return counts;
  };
  const auto hg = grams(hyp);
  const auto rg = grams(ref);
  std::size_t hyp_total = 0, ref_total = 0, overlap = 0;
  for (const auto& [g, c] : hg) hyp_total += c;
  for (const auto& [g, c] : rg) {
    ref_total += c;
    if (auto it = hg.find(g); it != hg.end()) overlap += std::min(c, it->second);
  }
  if (hyp_total == 0 || ref_total == 0) return {};
  return make_rouge(static_cast<double>(overlap) / static_cast<double>(hyp_total),
                    static_cast<double>(overlap) / static_cast<double>(ref_total));
}

inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline RougeScore rouge_l(const TokenSeq& hyp_in, const TokenSeq& ref_in) {
  const TokenSeq hyp = strip_markers(hyp_in);
  const TokenSeq ref = strip_markers(ref_in);
  if (hyp.empty() || ref.empty()) return {};
  const double l = static_cast<double>(lcs_length(hyp, ref));
  return make_rouge(l / static_cast<double>(hyp.size()), l / static_cast<double>(ref.size()));
}

/// 1 - unique/total over the hypothesis tokens; 0 for an empty hypothesis.
inline double repetition_rate(const TokenSeq& hyp_in) {
  const TokenSeq hyp = strip_markers(hyp_in);
  if (hyp.empty()) return 0.0;
  const std::set<std::string> unique(hyp.begin(), hyp.end());
  return 1.0 - static_cast<double>(unique.size()) / static_cast<double>(hyp.size());
}

/// ROUGE-L f-score scaled by (1 - repetition-rate).
inline double rouge_rp(const TokenSeq& hyp, const TokenSeq& ref) {
  return (1.0 - repetition_rate(hyp)) * rouge_l(hyp, ref).f;
}

/// Weighted harmonic mean (1+b^2) rp d / (rp + b^2 d); zero when the denominator is.
inline double rouge_rp_adv(double rp, double d, double beta) {
  if (!(beta > 0)) throw Error("rouge_rp_adv: beta must be positive");
  if (rp < 0 || rp > 1 || d < 0 || d > 1) throw Error("rouge_rp_adv: arguments must lie in [0,1]");
  const double b2 = beta * beta;
  const double denom = rp + b2 * d;
  if (denom == 0) return 0.0;
  return (1.0 + b2) * rp * d / denom;
}

struct RewardBreakdown {
  double rouge_l_f = 0.0;
  double repetition_rate = 0.0;
  double rouge_rp = 0.0;
  double d_score = 0.0;
  double beta = 0.0;
  double final_reward = 0.0;
};

inline void write_breakdown(std::ostream& os, const RewardBreakdown& b) {
  os << std::setprecision(10) << "rougeL_f=" << b.rouge_l_f << '\n'
     << "repetition_rate=" << b.repetition_rate << '\n'
     << "rouge_rp=" << b.rouge_rp << '\n'
     << "d_score=" << b.d_score << '\n'
     << "beta=" << b.beta << '\n'
     << "reward=" << b.final_reward << '\n';
}

/// Scores D(A, H) for an article/headline pair.
using HeadlineScorer = std::function<double(const TokenSeq& article, const TokenSeq& headline)>;

struct CorpusReport {
  std::size_t count = 0;
  double rouge1_f = 0.0;
  double rouge2_f = 0.0;
  double rougeL_f = 0.0;
  double repetition_rate = 0.0;
  std::optional<double> d_mean;
  std::optional<double> adv_reward_mean;
};

/// Means of the per-pair metrics. With a scorer, also the mean D(A,H) and
/// the mean ROUGE-RP-ADV at `beta`.
inline CorpusReport score_corpus(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs,
                                 std::span<const TokenSeq> articles = {},
                                 const HeadlineScorer& scorer = {}, double beta = 2000.0) {
  if (hyps.size() != refs.size()) {
    throw AlignmentError("hypotheses (" + std::to_string(hyps.size()) + ") and references (" +
                         std::to_string(refs.size()) + ") differ in length");
  }
  if (scorer && articles.size() != hyps.size()) {
    throw AlignmentError("articles (" + std::to_string(articles.size()) +
                         ") and hypotheses (" + std::to_string(hyps.size()) +
                         ") differ in length");
  }
  CorpusReport r;
  r.count = hyps.size();
  double d_sum = 0.0, adv_sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    r.rouge1_f += rouge_n(hyps[i], refs[i], 1).f;
    r.rouge2_f += rouge_n(hyps[i], refs[i], 2).f;
    r.rougeL_f += rouge_l(hyps[i], refs[i]).f;
    r.repetition_rate += repetition_rate(hyps[i]);
    if (scorer) {
      const double d = scorer(articles[i], hyps[i]);
      d_sum += d;
      adv_sum += rouge_rp_adv(rouge_rp(hyps[i], refs[i]), d, beta);
    }
  }
  if (r.count > 0) {
    const double n = static_cast<double>(r.count);
    r.rouge1_f /= n;
    r.rouge2_f /= n;
    r.rougeL_f /= n;
    r.repetition_rate /= n;
    if (scorer) {
      r.d_mean = d_sum / n;
      r.adv_reward_mean = adv_sum / n;
    }
  }
  return r;
}

/// Machine-readable report: one `key=value` line per metric.
inline void write_report_kv(std::ostream& os, const CorpusReport& r) {
  std::ostringstream s;
  s << std::setprecision(10);
  s << "rouge1_f=" << r.rouge1_f << '\n'
    << "rouge2_f=" << r.rouge2_f << '\n'
    << "rougeL_f=" << r.rougeL_f << '\n'
    << "repetition_rate=" << r.repetition_rate << '\n';
  if (r.d_mean) s << "d_mean=" << *r.d_mean << '\n';
  if (r.adv_reward_mean) s << "adv_reward_mean=" << *r.adv_reward_mean << '\n';
  os << s.str();
}

/// Human-readable table, scores in percent.
inline void write_report_table(std::ostream& os, const CorpusReport& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "| pairs | ROUGE-1 | ROUGE-2 | ROUGE-L | repetition-rate |";
  if (r.d_mean) s << " D(A,H) | ROUGE-RP-ADV |";
  s << '\n';
  s << "| " << r.count << " | " << 100 * r.rouge1_f << " | " << 100 * r.rouge2_f << " | "
    << 100 * r.rougeL_f << " | " << 100 * r.repetition_rate << "% |";
  if (r.d_mean) s << ' ' << std::setprecision(4) << *r.d_mean << " | " << *r.adv_reward_mean << " |";
  s << '\n';
  os << s.str();
}

}  // namespace hlgen
