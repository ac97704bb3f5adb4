#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "nrt/corpus.hpp"
#include "nrt/model.hpp"

namespace nrt {

// One partial decode. tokens includes the terminating EOS once finished;
// log_likelihood is the accumulated sum of per-step log-probabilities.
struct BeamHypothesis {
  std::vector<int> tokens;
  double log_likelihood = 0.0;
  Matrix state;  // decoder hidden after consuming tokens
  bool finished = false;
};

// Tokens without the terminating EOS: what actually renders as tips text.
inline std::vector<int> surface_tokens(const BeamHypothesis& hyp) {
  std::vector<int> out = hyp.tokens;
  if (!out.empty() && out.back() == Vocabulary::kEosId) out.pop_back();
  return out;
}

// Everything the decoder needs about one (user, item) pair.
struct DecoderContext {
  double rhat = 0.0;
  Matrix h0;  // d x 1
};

inline DecoderContext make_decoder_context(const NrtParams& p, int user, int item) {
  const int u[1] = {user};
  const int i[1] = {item};
  RatingForward rf = rating_forward(p, u, i);
  ReviewForward cf = review_forward(p, rf.u_cols, rf.v_cols);
  DecoderContext ctx;
  ctx.rhat = rf.rhat(0, 0);
  Matrix onehot = rating_to_onehot(ctx.rhat, p.hypers().rating_levels);
  ctx.h0 = decoder_init(p, rf.u_cols, rf.v_cols, onehot, cf.hidden.back());
  return ctx;
}

namespace detail {

// Indices of the k largest entries of a probability column, ties broken
// toward the lower token id (sort is stable over an id-ordered range).
inline std::vector<int> top_k_tokens(const Matrix& logp, std::size_t k) {
  std::vector<int> ids(logp.rows);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  const std::size_t keep = std::min(k, ids.size());
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    return logp(static_cast<std::size_t>(a), 0) > logp(static_cast<std::size_t>(b), 0);
  });
  ids.resize(keep);
  return ids;
}

}  // namespace detail

// Beam search: every live hypothesis proposes its top-beta tokens, the
// global top-beta by accumulated log-likelihood survive. A hypothesis that
// emits EOS is frozen (kept in the beam, never expanded) but keeps
// competing on its raw score. Hypotheses still alive after max_len steps
// are truncated without an EOS term. Ties break toward the lower token id,
// then toward the shorter sequence.
inline std::vector<BeamHypothesis> beam_search(const NrtParams& p, int user, int item,
                                               std::size_t beam_width, std::size_t max_len) {
  if (beam_width < 1) throw UsageError("beam_search: beam width must be >= 1");
  if (max_len < 1) throw UsageError("beam_search: max length must be >= 1");
  DecoderContext ctx = make_decoder_context(p, user, item);

  BeamHypothesis root;
  root.state = ctx.h0;
  std::vector<BeamHypothesis> beam = {root};

  const auto better = [](const BeamHypothesis& a, const BeamHypothesis& b) {
    if (a.log_likelihood != b.log_likelihood) return a.log_likelihood > b.log_likelihood;
    return a.tokens < b.tokens;  // deterministic: lower ids, then shorter
  };

  // Unfinished hypotheses hold exactly t tokens after round t, so max_len
  // rounds cap the surface length at max_len; anything still alive after
  // that is truncated without an EOS term.
  for (std::size_t t = 0; t < max_len; ++t) {
    bool any_live = false;
    std::vector<BeamHypothesis> pool;
    for (BeamHypothesis& hyp : beam) {
      if (hyp.finished) {
        pool.push_back(std::move(hyp));
        continue;
      }
      any_live = true;
      Matrix logp = word_logp(p, hyp.state);
      for (int token : detail::top_k_tokens(logp, beam_width)) {
        BeamHypothesis next;
        next.tokens = hyp.tokens;
        next.tokens.push_back(token);
        next.log_likelihood =
            hyp.log_likelihood + logp(static_cast<std::size_t>(token), 0);
        if (token == Vocabulary::kEosId) {
          next.finished = true;
          next.state = hyp.state;
        } else {
          next.state = gru_step_token(p, hyp.state, token).state;
        }
        pool.push_back(std::move(next));
      }
    }
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() > beam_width) pool.resize(beam_width);
    beam = std::move(pool);
    if (!any_live) break;
  }
  std::sort(beam.begin(), beam.end(), better);
  return beam;
}

// Greedy decoding: emit the argmax token at every step, feed it back, stop
// at EOS or after max_len tokens. Equivalent to beam_search with width 1.
// Returns the surface tokens (EOS excluded).
inline std::vector<int> greedy_decode(const NrtParams& p, int user, int item,
                                      std::size_t max_len) {
  DecoderContext ctx = make_decoder_context(p, user, item);
  std::vector<int> out;
  Matrix state = ctx.h0;
  for (std::size_t t = 0; t < max_len; ++t) {
    Matrix probs = word_dist(p, state);
    const int token = static_cast<int>(argmax_column(probs, 0));
    if (token == Vocabulary::kEosId) return out;
    out.push_back(token);
    state = gru_step_token(p, state, token).state;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Length normalization: rank by log_likelihood / LN(s) with
// LN(s) = (n + |s|)^alpha / (n + 1)^alpha, |s| counting surface tokens.

inline double length_normalization_factor(std::size_t surface_len, double n, double alpha) {
  return std::pow(n + static_cast<double>(surface_len), alpha) / std::pow(n + 1.0, alpha);
}

struct RankedHypothesis {
  BeamHypothesis hyp;
  double normalized_score = 0.0;  // raw score stays inside hyp
};

inline std::vector<RankedHypothesis> length_normalize(std::vector<BeamHypothesis> hyps,
                                                      double n, double alpha) {
  if (n < 0 || alpha < 0) throw UsageError("length_normalize: n and alpha must be >= 0");
  std::vector<RankedHypothesis> out;
  out.reserve(hyps.size());
  for (auto& hyp : hyps) {
    const std::size_t len = surface_tokens(hyp).size();
    RankedHypothesis ranked;
    ranked.normalized_score =
        hyp.log_likelihood / length_normalization_factor(len, n, alpha);
    ranked.hyp = std::move(hyp);
    out.push_back(std::move(ranked));
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedHypothesis& a, const RankedHypothesis& b) {
    if (a.normalized_score != b.normalized_score) return a.normalized_score > b.normalized_score;
    return a.hyp.tokens < b.hyp.tokens;
  });
  return out;
}

}  // namespace nrt
