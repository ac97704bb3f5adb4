#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "nrt/corpus.hpp"
#include "nrt/hypers.hpp"
#include "nrt/matrix.hpp"
#include "nrt/params.hpp"

namespace nrt {

// ---------------------------------------------------------------------------
// All learnable arrays. Latent factor tables hold one column per user/item;
// the embedding table one column per vocabulary entry. Slot names double as
// checkpoint keys, so their order and spelling are part of the file format.

class NrtParams {
 public:
  NrtParams(const Hypers& h, std::size_t users, std::size_t items, std::size_t vocab)
      : hypers_(h), num_users_(users), num_items_(items), vocab_size_(vocab) {
    hypers_.validate();
    if (users == 0 || items == 0) throw UsageError("model needs at least one user and item");
    if (vocab < 2) throw UsageError("model needs a vocabulary with the reserved tokens");
    const std::size_t d = h.hidden_dim;

    user_factors = ParamSlot("user_factors", h.user_dim, users);
    item_factors = ParamSlot("item_factors", h.item_dim, items);
    word_embeddings = ParamSlot("word_embeddings", h.word_dim, vocab);

    rating_user_w = ParamSlot("rating_user_w", d, h.user_dim);
    rating_item_w = ParamSlot("rating_item_w", d, h.item_dim);
    rating_fuse_b = ParamSlot("rating_fuse_b", d, 1);
    for (std::size_t l = 2; l <= h.rating_layers; ++l) {
      rating_hidden_w.emplace_back("rating_hidden" + std::to_string(l) + "_w", d, d);
      rating_hidden_b.emplace_back("rating_hidden" + std::to_string(l) + "_b", d, 1);
    }
    rating_out_w = ParamSlot("rating_out_w", 1, d);
    rating_out_b = ParamSlot("rating_out_b", 1, 1);

    review_user_w = ParamSlot("review_user_w", d, h.user_dim);
    review_item_w = ParamSlot("review_item_w", d, h.item_dim);
    review_fuse_b = ParamSlot("review_fuse_b", d, 1);
    for (std::size_t l = 2; l <= h.review_layers; ++l) {
      review_hidden_w.emplace_back("review_hidden" + std::to_string(l) + "_w", d, d);
      review_hidden_b.emplace_back("review_hidden" + std::to_string(l) + "_b", d, 1);
    }
    review_out_w = ParamSlot("review_out_w", vocab, d);
    review_out_b = ParamSlot("review_out_b", vocab, 1);

    gru_reset_in_w = ParamSlot("gru_reset_in_w", d, h.word_dim);
    gru_reset_rec_w = ParamSlot("gru_reset_rec_w", d, d);
    gru_reset_b = ParamSlot("gru_reset_b", d, 1);
    gru_update_in_w = ParamSlot("gru_update_in_w", d, h.word_dim);
    gru_update_rec_w = ParamSlot("gru_update_rec_w", d, d);
    gru_update_b = ParamSlot("gru_update_b", d, 1);
    gru_cand_in_w = ParamSlot("gru_cand_in_w", d, h.word_dim);
    gru_cand_rec_w = ParamSlot("gru_cand_rec_w", d, d);
    gru_cand_b = ParamSlot("gru_cand_b", d, 1);

    dec_init_user_w = ParamSlot("dec_init_user_w", d, h.user_dim);
    dec_init_item_w = ParamSlot("dec_init_item_w", d, h.item_dim);
    dec_init_rating_w = ParamSlot("dec_init_rating_w", d, h.rating_levels);
    dec_init_review_w = ParamSlot("dec_init_review_w", d, d);
    dec_init_b = ParamSlot("dec_init_b", d, 1);

    dec_out_w = ParamSlot("dec_out_w", vocab, d);
    dec_out_b = ParamSlot("dec_out_b", vocab, 1);
  }

  const Hypers& hypers() const { return hypers_; }
  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t vocab_size() const { return vocab_size_; }

  // Every slot, in a fixed order shared by the optimizer, the checkpoint
  // writer and the gradient checker.
  std::vector<ParamSlot*> slots() {
    std::vector<ParamSlot*> out = {&user_factors, &item_factors, &word_embeddings,
                                   &rating_user_w, &rating_item_w, &rating_fuse_b};
    for (std::size_t l = 0; l < rating_hidden_w.size(); ++l) {
      out.push_back(&rating_hidden_w[l]);
      out.push_back(&rating_hidden_b[l]);
    }
    out.push_back(&rating_out_w);
    out.push_back(&rating_out_b);
    out.push_back(&review_user_w);
    out.push_back(&review_item_w);
    out.push_back(&review_fuse_b);
    for (std::size_t l = 0; l < review_hidden_w.size(); ++l) {
      out.push_back(&review_hidden_w[l]);
      out.push_back(&review_hidden_b[l]);
    }
    out.push_back(&review_out_w);
    out.push_back(&review_out_b);
    for (ParamSlot* s : {&gru_reset_in_w, &gru_reset_rec_w, &gru_reset_b,
                         &gru_update_in_w, &gru_update_rec_w, &gru_update_b,
                         &gru_cand_in_w, &gru_cand_rec_w, &gru_cand_b,
                         &dec_init_user_w, &dec_init_item_w, &dec_init_rating_w,
                         &dec_init_review_w, &dec_init_b, &dec_out_w, &dec_out_b})
      out.push_back(s);
    return out;
  }

  std::vector<const ParamSlot*> slots() const {
    auto mut = const_cast<NrtParams*>(this)->slots();
    return {mut.begin(), mut.end()};
  }

  // The neural parameter set: everything except the latent factor tables
  // and the word embeddings.
  std::vector<ParamSlot*> theta_slots() {
    std::vector<ParamSlot*> out;
    for (ParamSlot* s : slots()) {
      if (s == &user_factors || s == &item_factors || s == &word_embeddings) continue;
      out.push_back(s);
    }
    return out;
  }

  // L2-penalized slots: latent factors plus the neural parameters. The word
  // embeddings stay out of the penalty.
  std::vector<ParamSlot*> regularized_slots() {
    std::vector<ParamSlot*> out;
    for (ParamSlot* s : slots()) {
      if (s == &word_embeddings) continue;
      out.push_back(s);
    }
    return out;
  }

  void reset_grads() {
    for (ParamSlot* s : slots()) s->reset_grad();
  }

  ParamSlot user_factors, item_factors, word_embeddings;

  ParamSlot rating_user_w, rating_item_w, rating_fuse_b;
  std::vector<ParamSlot> rating_hidden_w, rating_hidden_b;
  ParamSlot rating_out_w, rating_out_b;

  ParamSlot review_user_w, review_item_w, review_fuse_b;
  std::vector<ParamSlot> review_hidden_w, review_hidden_b;
  ParamSlot review_out_w, review_out_b;

  ParamSlot gru_reset_in_w, gru_reset_rec_w, gru_reset_b;
  ParamSlot gru_update_in_w, gru_update_rec_w, gru_update_b;
  ParamSlot gru_cand_in_w, gru_cand_rec_w, gru_cand_b;

  ParamSlot dec_init_user_w, dec_init_item_w, dec_init_rating_w, dec_init_review_w, dec_init_b;
  ParamSlot dec_out_w, dec_out_b;

 private:
  Hypers hypers_;
  std::size_t num_users_;
  std::size_t num_items_;
  std::size_t vocab_size_;
};

// ---------------------------------------------------------------------------
// Rating head.

struct RatingForward {
  Matrix u_cols;                // k_u x B
  Matrix v_cols;                // k_v x B
  std::vector<Matrix> hidden;   // L matrices, each d x B
  Matrix rhat;                  // 1 x B, unclamped regression output
};

inline RatingForward rating_forward(const NrtParams& p, std::span<const int> users,
                                    std::span<const int> items) {
  RatingForward fwd;
  fwd.u_cols = gather_columns(p.user_factors.value, users);
  fwd.v_cols = gather_columns(p.item_factors.value, items);
  Matrix pre = affine(p.rating_user_w.value, fwd.u_cols, p.rating_fuse_b.value);
  add_matmul(pre, p.rating_item_w.value, fwd.v_cols);
  fwd.hidden.push_back(activate(pre, Activation::kSigmoid));
  for (std::size_t l = 0; l < p.rating_hidden_w.size(); ++l) {
    fwd.hidden.push_back(activate(
        affine(p.rating_hidden_w[l].value, fwd.hidden.back(), p.rating_hidden_b[l].value),
        Activation::kSigmoid));
  }
  fwd.rhat = affine(p.rating_out_w.value, fwd.hidden.back(), p.rating_out_b.value);
  return fwd;
}

inline double rating_predict(const NrtParams& p, int user, int item) {
  const int u[1] = {user};
  const int i[1] = {item};
  return rating_forward(p, u, i).rhat(0, 0);
}

// (1 / 2B) * sum (rhat - r)^2.
inline double rating_loss(const Matrix& rhat, std::span<const double> truth) {
  if (truth.empty()) throw UsageError("rating_loss: empty batch");
  require(rhat.rows == 1 && rhat.cols == truth.size(),
          "rating_loss: predictions " + rhat.shape_str() + " vs batch of " +
              std::to_string(truth.size()));
  double acc = 0.0;
  for (std::size_t b = 0; b < truth.size(); ++b) {
    const double e = rhat(0, b) - truth[b];
    acc += e * e;
  }
  return acc / (2.0 * static_cast<double>(truth.size()));
}

// Backward through the MLP given dL/drhat; accumulates parameter grads and
// the gathered-column grads for U and V.
inline void rating_backward(NrtParams& p, const RatingForward& fwd, const Matrix& d_rhat,
                            Matrix& du_cols, Matrix& dv_cols) {
  Matrix d_h(fwd.hidden.back().rows, fwd.hidden.back().cols);
  affine_backward(p.rating_out_w.value, fwd.hidden.back(), d_rhat, &p.rating_out_w.grad,
                  &d_h, &p.rating_out_b.grad);
  for (std::size_t l = p.rating_hidden_w.size(); l-- > 0;) {
    Matrix d_pre = activate_backward(fwd.hidden[l + 1], d_h, Activation::kSigmoid);
    d_h.zero();
    affine_backward(p.rating_hidden_w[l].value, fwd.hidden[l], d_pre,
                    &p.rating_hidden_w[l].grad, &d_h, &p.rating_hidden_b[l].grad);
  }
  Matrix d_pre = activate_backward(fwd.hidden[0], d_h, Activation::kSigmoid);
  affine_backward(p.rating_user_w.value, fwd.u_cols, d_pre, &p.rating_user_w.grad, &du_cols,
                  &p.rating_fuse_b.grad);
  affine_backward(p.rating_item_w.value, fwd.v_cols, d_pre, &p.rating_item_w.grad, &dv_cols,
                  nullptr);
}

// ---------------------------------------------------------------------------
// Review head: bag-of-words generative distribution over the vocabulary.

struct ReviewForward {
  std::vector<Matrix> hidden;  // review_layers matrices, d x B
  Matrix probs;                // |V| x B simplex columns
  Matrix logp;                 // |V| x B log probabilities
};

inline ReviewForward review_forward(const NrtParams& p, const Matrix& u_cols,
                                    const Matrix& v_cols) {
  ReviewForward fwd;
  Matrix pre = affine(p.review_user_w.value, u_cols, p.review_fuse_b.value);
  add_matmul(pre, p.review_item_w.value, v_cols);
  fwd.hidden.push_back(activate(pre, Activation::kSigmoid));
  for (std::size_t l = 0; l < p.review_hidden_w.size(); ++l) {
    fwd.hidden.push_back(activate(
        affine(p.review_hidden_w[l].value, fwd.hidden.back(), p.review_hidden_b[l].value),
        Activation::kSigmoid));
  }
  Matrix logits = affine(p.review_out_w.value, fwd.hidden.back(), p.review_out_b.value);
  fwd.probs = softmax_columns(logits);
  fwd.logp = log_softmax_columns(logits);
  return fwd;
}

// NLL of one bag against one log-probability column: -sum_k c_k log chat_k.
inline double review_loss(const Matrix& logp, std::size_t col,
                          std::span<const std::pair<int, std::int64_t>> bow) {
  double acc = 0.0;
  for (const auto& [token, count] : bow) {
    acc -= static_cast<double>(count) * logp(static_cast<std::size_t>(token), col);
  }
  return acc;
}

// Backward for the review head. d_logits must already carry the head's loss
// scaling; d_hidden_extra (may be empty) is the decoder-init contribution
// flowing into the last hidden layer.
inline void review_backward(NrtParams& p, const ReviewForward& fwd, const Matrix& u_cols,
                            const Matrix& v_cols, const Matrix& d_logits,
                            const Matrix& d_hidden_extra, Matrix& du_cols, Matrix& dv_cols) {
  Matrix d_h(fwd.hidden.back().rows, fwd.hidden.back().cols);
  affine_backward(p.review_out_w.value, fwd.hidden.back(), d_logits, &p.review_out_w.grad,
                  &d_h, &p.review_out_b.grad);
  if (d_hidden_extra.size() > 0) add_inplace(d_h, d_hidden_extra);
  for (std::size_t l = p.review_hidden_w.size(); l-- > 0;) {
    Matrix d_pre = activate_backward(fwd.hidden[l + 1], d_h, Activation::kSigmoid);
    d_h.zero();
    affine_backward(p.review_hidden_w[l].value, fwd.hidden[l], d_pre,
                    &p.review_hidden_w[l].grad, &d_h, &p.review_hidden_b[l].grad);
  }
  Matrix d_pre = activate_backward(fwd.hidden[0], d_h, Activation::kSigmoid);
  affine_backward(p.review_user_w.value, u_cols, d_pre, &p.review_user_w.grad, &du_cols,
                  &p.review_fuse_b.grad);
  affine_backward(p.review_item_w.value, v_cols, d_pre, &p.review_item_w.grad, &dv_cols,
                  nullptr);
}

// ---------------------------------------------------------------------------
// Rating vectorization: floor, clamp to the level range, one-hot. The result
// is a constant with respect to gradients (integerization is not
// differentiable), so the tips loss reaches the rating path only through the
// shared latent factors.

inline std::size_t rating_level(double rhat, std::size_t levels) {
  double f = std::floor(rhat);
  if (f < 0.0) f = 0.0;
  const double top = static_cast<double>(levels - 1);
  if (f > top) f = top;
  return static_cast<std::size_t>(f);
}

inline Matrix rating_to_onehot(double rhat, std::size_t levels) {
  if (levels < 1) throw UsageError("rating_to_onehot: levels must be >= 1");
  Matrix out(levels, 1);
  out(rating_level(rhat, levels), 0) = 1.0;
  return out;
}

inline Matrix rating_to_onehot_batch(const Matrix& rhat, std::size_t levels) {
  if (levels < 1) throw UsageError("rating_to_onehot: levels must be >= 1");
  Matrix out(levels, rhat.cols);
  for (std::size_t b = 0; b < rhat.cols; ++b) out(rating_level(rhat(0, b), levels), b) = 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Tips decoder pieces.

// h0 = tanh(Wu u + Wv v + Wr onehot + Wc review_hidden + b).
inline Matrix decoder_init(const NrtParams& p, const Matrix& u_cols, const Matrix& v_cols,
                           const Matrix& r_onehot, const Matrix& review_hidden) {
  Matrix pre = affine(p.dec_init_user_w.value, u_cols, p.dec_init_b.value);
  add_matmul(pre, p.dec_init_item_w.value, v_cols);
  add_matmul(pre, p.dec_init_rating_w.value, r_onehot);
  add_matmul(pre, p.dec_init_review_w.value, review_hidden);
  return activate(pre, Activation::kTanh);
}

struct GruStep {
  Matrix reset;      // r_t
  Matrix update;     // z_t
  Matrix candidate;  // g_t
  Matrix state;      // h_t
};

// One GRU update on a batch of columns. x holds the embedded input tokens.
inline GruStep gru_step(const NrtParams& p, const Matrix& h_prev, const Matrix& x) {
  GruStep step;
  Matrix pre_r = affine(p.gru_reset_in_w.value, x, p.gru_reset_b.value);
  add_matmul(pre_r, p.gru_reset_rec_w.value, h_prev);
  step.reset = activate(pre_r, Activation::kSigmoid);

  Matrix pre_z = affine(p.gru_update_in_w.value, x, p.gru_update_b.value);
  add_matmul(pre_z, p.gru_update_rec_w.value, h_prev);
  step.update = activate(pre_z, Activation::kSigmoid);

  Matrix gated = hadamard(step.reset, h_prev);
  Matrix pre_g = affine(p.gru_cand_in_w.value, x, p.gru_cand_b.value);
  add_matmul(pre_g, p.gru_cand_rec_w.value, gated);
  step.candidate = activate(pre_g, Activation::kTanh);

  step.state = Matrix(h_prev.rows, h_prev.cols);
  for (std::size_t i = 0; i < step.state.size(); ++i) {
    const double z = step.update.data[i];
    step.state.data[i] = z * h_prev.data[i] + (1.0 - z) * step.candidate.data[i];
  }
  return step;
}

inline GruStep gru_step_token(const NrtParams& p, const Matrix& h_prev, int token) {
  return gru_step(p, h_prev, embed_lookup(p.word_embeddings.value, token));
}

// Backward of one GRU step. d_state is dL/dh_t; accumulates parameter grads
// and returns dL/dh_{t-1} plus dL/dx.
struct GruBackward {
  Matrix d_h_prev;
  Matrix d_x;
};

inline GruBackward gru_step_backward(NrtParams& p, const GruStep& step, const Matrix& h_prev,
                                     const Matrix& x, const Matrix& d_state) {
  GruBackward out;
  out.d_h_prev = hadamard(d_state, step.update);
  out.d_x = Matrix(x.rows, x.cols);

  // h = z * h_prev + (1 - z) * g
  Matrix d_update(d_state.rows, d_state.cols);
  Matrix d_cand(d_state.rows, d_state.cols);
  for (std::size_t i = 0; i < d_state.size(); ++i) {
    d_update.data[i] = d_state.data[i] * (h_prev.data[i] - step.candidate.data[i]);
    d_cand.data[i] = d_state.data[i] * (1.0 - step.update.data[i]);
  }

  // Candidate branch: g = tanh(Wg x + Ug (r . h_prev) + bg)
  Matrix d_pre_g = activate_backward(step.candidate, d_cand, Activation::kTanh);
  Matrix gated = hadamard(step.reset, h_prev);
  affine_backward(p.gru_cand_in_w.value, x, d_pre_g, &p.gru_cand_in_w.grad, &out.d_x,
                  &p.gru_cand_b.grad);
  Matrix d_gated(h_prev.rows, h_prev.cols);
  affine_backward(p.gru_cand_rec_w.value, gated, d_pre_g, &p.gru_cand_rec_w.grad, &d_gated,
                  nullptr);
  Matrix d_reset(h_prev.rows, h_prev.cols);
  for (std::size_t i = 0; i < d_gated.size(); ++i) {
    d_reset.data[i] = d_gated.data[i] * h_prev.data[i];
    out.d_h_prev.data[i] += d_gated.data[i] * step.reset.data[i];
  }

  // Reset gate: r = sigmoid(Wr x + Ur h_prev + br)
  Matrix d_pre_r = activate_backward(step.reset, d_reset, Activation::kSigmoid);
  affine_backward(p.gru_reset_in_w.value, x, d_pre_r, &p.gru_reset_in_w.grad, &out.d_x,
                  &p.gru_reset_b.grad);
  affine_backward(p.gru_reset_rec_w.value, h_prev, d_pre_r, &p.gru_reset_rec_w.grad,
                  &out.d_h_prev, nullptr);

  // Update gate: z = sigmoid(Wz x + Uz h_prev + bz)
  Matrix d_pre_z = activate_backward(step.update, d_update, Activation::kSigmoid);
  affine_backward(p.gru_update_in_w.value, x, d_pre_z, &p.gru_update_in_w.grad, &out.d_x,
                  &p.gru_update_b.grad);
  affine_backward(p.gru_update_rec_w.value, h_prev, d_pre_z, &p.gru_update_rec_w.grad,
                  &out.d_h_prev, nullptr);
  return out;
}

// Next-word distribution from a decoder state.
inline Matrix word_dist(const NrtParams& p, const Matrix& state) {
  return softmax_columns(affine(p.dec_out_w.value, state, p.dec_out_b.value));
}

inline Matrix word_logp(const NrtParams& p, const Matrix& state) {
  return log_softmax_columns(affine(p.dec_out_w.value, state, p.dec_out_b.value));
}

// ---------------------------------------------------------------------------
// Joint objective over a batch.

struct HeadLosses {
  double joint = 0.0;
  double rating = 0.0;
  double review = 0.0;
  double tips = 0.0;
  double reg = 0.0;
};

namespace detail {

inline double regularizer_value(NrtParams& p) {
  double acc = 0.0;
  for (ParamSlot* s : p.regularized_slots()) acc += squared_norm(s->value);
  return acc;
}

inline void check_finite_losses(const HeadLosses& losses) {
  const auto bad = [](double v) { return !std::isfinite(v); };
  if (bad(losses.rating)) throw TrainingError("rating loss is not finite");
  if (bad(losses.review)) throw TrainingError("review loss is not finite");
  if (bad(losses.tips)) throw TrainingError("tips loss is not finite");
  if (bad(losses.reg)) throw TrainingError("regularization term is not finite");
}

struct TipsTrace {
  Matrix r_onehot;               // levels x B, stop-gradient context
  std::vector<Matrix> states;    // h_0 .. h_{T-1}, d x B
  std::vector<GruStep> steps;    // steps[t] produced states[t+1]
  std::vector<Matrix> inputs;    // embedded tokens fed into steps[t]
  std::vector<Matrix> probs;     // per position |V| x B
  double loss_sum = 0.0;         // sum over batch of per-sample sums
};

// Teacher-forced unroll over a padded batch. Position t scores token t; the
// token is then fed back as input for position t+1. The first position is
// predicted straight from h0 (no begin-of-sequence symbol).
inline TipsTrace tips_unroll(const NrtParams& p, const Batch& batch, const Matrix& u_cols,
                             const Matrix& v_cols, const Matrix& rhat,
                             const Matrix& review_hidden, bool want_probs) {
  TipsTrace trace;
  const std::size_t b_sz = batch.size();
  trace.r_onehot = rating_to_onehot_batch(rhat, p.hypers().rating_levels);
  trace.states.push_back(decoder_init(p, u_cols, v_cols, trace.r_onehot, review_hidden));
  for (std::size_t t = 0; t < batch.tips_steps; ++t) {
    Matrix logits = affine(p.dec_out_w.value, trace.states[t], p.dec_out_b.value);
    Matrix logp = log_softmax_columns(logits);
    for (std::size_t b = 0; b < b_sz; ++b) {
      if (!batch.live_at(t, b)) continue;
      trace.loss_sum -= logp(static_cast<std::size_t>(batch.tips_at(t, b)), b);
    }
    if (want_probs) trace.probs.push_back(softmax_columns(logits));
    if (t + 1 < batch.tips_steps) {
      std::vector<int> tokens(b_sz);
      for (std::size_t b = 0; b < b_sz; ++b) tokens[b] = batch.tips_at(t, b);
      trace.inputs.push_back(gather_columns(p.word_embeddings.value, tokens));
      trace.steps.push_back(gru_step(p, trace.states[t], trace.inputs.back()));
      trace.states.push_back(trace.steps.back().state);
    }
  }
  return trace;
}

}  // namespace detail

// Forward-only joint objective; used for reporting and finite differences.
inline HeadLosses joint_loss(NrtParams& p, const Batch& batch) {
  if (batch.size() == 0) throw UsageError("joint_loss: empty batch");
  const Hypers& h = p.hypers();
  const double b_sz = static_cast<double>(batch.size());
  HeadLosses losses;

  RatingForward rf = rating_forward(p, batch.users, batch.items);
  losses.rating = rating_loss(rf.rhat, batch.ratings);

  ReviewForward cf = review_forward(p, rf.u_cols, rf.v_cols);
  double review_sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) review_sum += review_loss(cf.logp, b, *batch.bows[b]);
  losses.review = review_sum / b_sz;

  detail::TipsTrace tips = detail::tips_unroll(p, batch, rf.u_cols, rf.v_cols, rf.rhat,
                                               cf.hidden.back(), /*want_probs=*/false);
  losses.tips = tips.loss_sum / b_sz;

  losses.reg = detail::regularizer_value(p);
  losses.joint = h.lambda_rating * losses.rating + h.lambda_review * losses.review +
                 h.lambda_tips * losses.tips + h.lambda_reg * losses.reg;
  detail::check_finite_losses(losses);
  return losses;
}

// Joint objective plus the full backward pass. Gradients accumulate into the
// slots, so callers reset grads before the call; the L2 penalty contributes
// 2 * lambda_reg * value to every regularized slot.
inline HeadLosses joint_loss_and_backward(NrtParams& p, const Batch& batch) {
  if (batch.size() == 0) throw UsageError("joint_loss_and_backward: empty batch");
  const Hypers& h = p.hypers();
  const std::size_t b_sz = batch.size();
  const double inv_b = 1.0 / static_cast<double>(b_sz);
  HeadLosses losses;

  // Forward.
  RatingForward rf = rating_forward(p, batch.users, batch.items);
  losses.rating = rating_loss(rf.rhat, batch.ratings);
  ReviewForward cf = review_forward(p, rf.u_cols, rf.v_cols);
  double review_sum = 0.0;
  for (std::size_t b = 0; b < b_sz; ++b) review_sum += review_loss(cf.logp, b, *batch.bows[b]);
  losses.review = review_sum * inv_b;
  detail::TipsTrace tips = detail::tips_unroll(p, batch, rf.u_cols, rf.v_cols, rf.rhat,
                                               cf.hidden.back(), /*want_probs=*/true);
  losses.tips = tips.loss_sum * inv_b;
  losses.reg = detail::regularizer_value(p);
  losses.joint = h.lambda_rating * losses.rating + h.lambda_review * losses.review +
                 h.lambda_tips * losses.tips + h.lambda_reg * losses.reg;
  detail::check_finite_losses(losses);

  Matrix du_cols(rf.u_cols.rows, rf.u_cols.cols);
  Matrix dv_cols(rf.v_cols.rows, rf.v_cols.cols);

  // Tips head backward, first because it feeds gradient into the review
  // hidden state. The rating one-hot context is a constant.
  Matrix d_review_hidden(cf.hidden.back().rows, cf.hidden.back().cols);
  if (h.lambda_tips != 0.0) {
    const double scale = h.lambda_tips * inv_b;
    Matrix d_state(p.hypers().hidden_dim, b_sz);
    for (std::size_t t = batch.tips_steps; t-- > 0;) {
      Matrix d_logits = tips.probs[t];
      for (std::size_t b = 0; b < b_sz; ++b) {
        if (!batch.live_at(t, b)) {
          for (std::size_t k = 0; k < d_logits.rows; ++k) d_logits(k, b) = 0.0;
          continue;
        }
        d_logits(static_cast<std::size_t>(batch.tips_at(t, b)), b) -= 1.0;
        for (std::size_t k = 0; k < d_logits.rows; ++k) d_logits(k, b) *= scale;
      }
      affine_backward(p.dec_out_w.value, tips.states[t], d_logits, &p.dec_out_w.grad,
                      &d_state, &p.dec_out_b.grad);
      if (t > 0) {
        GruBackward back = gru_step_backward(p, tips.steps[t - 1], tips.states[t - 1],
                                             tips.inputs[t - 1], d_state);
        std::vector<int> tokens(b_sz);
        for (std::size_t b = 0; b < b_sz; ++b) tokens[b] = batch.tips_at(t - 1, b);
        scatter_add_columns(p.word_embeddings.grad, tokens, back.d_x);
        d_state = std::move(back.d_h_prev);
      } else {
        // Through the tanh of the initial state into the four contexts.
        Matrix d_pre = activate_backward(tips.states[0], d_state, Activation::kTanh);
        affine_backward(p.dec_init_user_w.value, rf.u_cols, d_pre, &p.dec_init_user_w.grad,
                        &du_cols, &p.dec_init_b.grad);
        affine_backward(p.dec_init_item_w.value, rf.v_cols, d_pre, &p.dec_init_item_w.grad,
                        &dv_cols, nullptr);
        affine_backward(p.dec_init_rating_w.value, tips.r_onehot, d_pre,
                        &p.dec_init_rating_w.grad, nullptr, nullptr);
        affine_backward(p.dec_init_review_w.value, cf.hidden.back(), d_pre,
                        &p.dec_init_review_w.grad, &d_review_hidden, nullptr);
      }
    }
  }

  // Review head backward, folding in the decoder-init contribution.
  {
    Matrix d_logits(p.vocab_size(), b_sz);
    if (h.lambda_review != 0.0) {
      const double scale = h.lambda_review * inv_b;
      for (std::size_t b = 0; b < b_sz; ++b) {
        double total = 0.0;
        for (const auto& [token, count] : *batch.bows[b]) total += static_cast<double>(count);
        if (total != 0.0) {
          for (std::size_t k = 0; k < d_logits.rows; ++k)
            d_logits(k, b) = scale * total * cf.probs(k, b);
        }
        for (const auto& [token, count] : *batch.bows[b])
          d_logits(static_cast<std::size_t>(token), b) -= scale * static_cast<double>(count);
      }
    }
    review_backward(p, cf, rf.u_cols, rf.v_cols, d_logits, d_review_hidden, du_cols, dv_cols);
  }

  // Rating head backward. The one-hot used by the decoder does not
  // backpropagate here.
  if (h.lambda_rating != 0.0) {
    Matrix d_rhat(1, b_sz);
    const double scale = h.lambda_rating * inv_b;
    for (std::size_t b = 0; b < b_sz; ++b)
      d_rhat(0, b) = scale * (rf.rhat(0, b) - batch.ratings[b]);
    rating_backward(p, rf, d_rhat, du_cols, dv_cols);
  }

  scatter_add_columns(p.user_factors.grad, batch.users, du_cols);
  scatter_add_columns(p.item_factors.grad, batch.items, dv_cols);

  if (h.lambda_reg != 0.0) {
    for (ParamSlot* s : p.regularized_slots()) axpy(s->grad, 2.0 * h.lambda_reg, s->value);
  }
  return losses;
}

// Teacher-forced tips NLL for a single interaction; convenience wrapper over
// the batched path.
inline double tips_loss(const NrtParams& p, int user, int item,
                        const std::vector<int>& tips_tokens) {
  if (tips_tokens.empty() || tips_tokens.back() != Vocabulary::kEosId)
    throw UsageError("tips_loss: token sequence must be EOS-terminated");
  Interaction inter;
  inter.user = user;
  inter.item = item;
  inter.tips_tokens = tips_tokens;
  const Interaction* rows[1] = {&inter};
  Batch batch = make_batch(rows);
  const int u[1] = {user};
  const int i[1] = {item};
  RatingForward rf = rating_forward(p, u, i);
  ReviewForward cf = review_forward(p, rf.u_cols, rf.v_cols);
  detail::TipsTrace trace = detail::tips_unroll(p, batch, rf.u_cols, rf.v_cols, rf.rhat,
                                                cf.hidden.back(), /*want_probs=*/false);
  return trace.loss_sum;
}

}  // namespace nrt
