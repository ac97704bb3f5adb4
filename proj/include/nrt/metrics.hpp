#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nrt/errors.hpp"

namespace nrt {

// ---------------------------------------------------------------------------
// Rating metrics.

struct RatingEval {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

// pairs hold (truth, prediction).
inline RatingEval rating_metrics(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw UsageError("rating_metrics: empty prediction list");
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (const auto& [truth, pred] : pairs) {
    const double e = truth - pred;
    abs_sum += std::fabs(e);
    sq_sum += e * e;
  }
  RatingEval out;
  out.count = pairs.size();
  out.mae = abs_sum / static_cast<double>(pairs.size());
  out.rmse = std::sqrt(sq_sum / static_cast<double>(pairs.size()));
  return out;
}

// ---------------------------------------------------------------------------
// ROUGE. All variants reduce to clipped overlap of a unit multiset:
// n-grams, LCS length, or skip-bigrams+unigrams.

struct RougeTriple {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline RougeTriple from_overlap(double overlap, double ref_units, double cand_units) {
  RougeTriple out;
  out.recall = ref_units > 0 ? overlap / ref_units : 0.0;
  out.precision = cand_units > 0 ? overlap / cand_units : 0.0;
  out.f1 = (out.precision + out.recall) > 0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

using UnitCounts = std::map<std::vector<std::string>, std::int64_t>;

inline double clipped_overlap(const UnitCounts& cand, const UnitCounts& ref) {
  double overlap = 0.0;
  for (const auto& [unit, ref_count] : ref) {
    const auto it = cand.find(unit);
    if (it != cand.end())
      overlap += static_cast<double>(std::min(it->second, ref_count));
  }
  return overlap;
}

inline UnitCounts ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  UnitCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                  tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[std::move(gram)];
  }
  return counts;
}

// Unigrams plus ordered skip-bigrams with at most `max_gap` tokens between
// the two words. Single-element units are tagged so a unigram never
// collides with a bigram in the multiset.
inline UnitCounts su_counts(std::span<const std::string> tokens, std::size_t max_gap) {
  UnitCounts counts;
  for (const auto& tok : tokens) ++counts[{tok}];
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t j = i + 1; j < tokens.size() && j - i - 1 <= max_gap; ++j) {
      ++counts[{tokens[i], tokens[j]}];
    }
  }
  return counts;
}

inline double total_units(const UnitCounts& counts) {
  double total = 0.0;
  for (const auto& [unit, c] : counts) total += static_cast<double>(c);
  return total;
}

}  // namespace detail

inline RougeTriple rouge_n(std::span<const std::string> candidate,
                           std::span<const std::string> reference, std::size_t n) {
  if (n < 1) throw UsageError("rouge_n: n must be >= 1");
  const auto cand = detail::ngram_counts(candidate, n);
  const auto ref = detail::ngram_counts(reference, n);
  return detail::from_overlap(detail::clipped_overlap(cand, ref), detail::total_units(ref),
                              detail::total_units(cand));
}

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1]) {
        curr[j] = prev[j - 1] + 1;
      } else {
        curr[j] = std::max(prev[j], curr[j - 1]);
      }
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

inline RougeTriple rouge_l(std::span<const std::string> candidate,
                           std::span<const std::string> reference) {
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  return detail::from_overlap(lcs, static_cast<double>(reference.size()),
                              static_cast<double>(candidate.size()));
}

inline RougeTriple rouge_su4(std::span<const std::string> candidate,
                             std::span<const std::string> reference) {
  const auto cand = detail::su_counts(candidate, 4);
  const auto ref = detail::su_counts(reference, 4);
  return detail::from_overlap(detail::clipped_overlap(cand, ref), detail::total_units(ref),
                              detail::total_units(cand));
}

struct RougeScores {
  RougeTriple r1, r2, rl, rsu4;
};

inline RougeScores score_pair(std::span<const std::string> candidate,
                              std::span<const std::string> reference) {
  RougeScores out;
  out.r1 = rouge_n(candidate, reference, 1);
  out.r2 = rouge_n(candidate, reference, 2);
  out.rl = rouge_l(candidate, reference);
  out.rsu4 = rouge_su4(candidate, reference);
  return out;
}

struct CorpusRouge {
  RougeScores mean;
  std::vector<RougeScores> per_pair;
};

// Macro average: each candidate scores against its own reference, scores
// average uniformly over pairs.
inline CorpusRouge corpus_rouge(
    std::span<const std::pair<std::vector<std::string>, std::vector<std::string>>> pairs) {
  if (pairs.empty()) throw UsageError("corpus_rouge: empty pair list");
  CorpusRouge out;
  out.per_pair.reserve(pairs.size());
  for (const auto& [cand, ref] : pairs) out.per_pair.push_back(score_pair(cand, ref));
  const double inv = 1.0 / static_cast<double>(pairs.size());
  const auto add = [inv](RougeTriple& acc, const RougeTriple& x) {
    acc.recall += inv * x.recall;
    acc.precision += inv * x.precision;
    acc.f1 += inv * x.f1;
  };
  for (const auto& s : out.per_pair) {
    add(out.mean.r1, s.r1);
    add(out.mean.r2, s.r2);
    add(out.mean.rl, s.rl);
    add(out.mean.rsu4, s.rsu4);
  }
  return out;
}

}  // namespace nrt
