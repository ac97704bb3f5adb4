#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nrt/corpus.hpp"
#include "nrt/metrics.hpp"
#include "nrt/model.hpp"

namespace nrt {

// ---------------------------------------------------------------------------
// Adadelta. One pair of accumulators per slot, elementwise update rule.

struct AdadeltaState {
  std::vector<Matrix> grad_sq;   // running E[g^2]
  std::vector<Matrix> delta_sq;  // running E[dx^2]
  double rho = 0.95;
  double eps = 1e-6;

  static AdadeltaState for_slots(std::span<ParamSlot* const> slots, double rho, double eps) {
    AdadeltaState state;
    state.rho = rho;
    state.eps = eps;
    for (const ParamSlot* s : slots) {
      state.grad_sq.emplace_back(s->value.rows, s->value.cols);
      state.delta_sq.emplace_back(s->value.rows, s->value.cols);
    }
    return state;
  }
};

// E[g^2] <- rho E[g^2] + (1-rho) g^2
// dx     <- -(sqrt(E[dx^2]+eps) / sqrt(E[g^2]+eps)) g
// E[dx^2]<- rho E[dx^2] + (1-rho) dx^2
// param  += dx; grad reset.
inline void adadelta_step(ParamSlot& slot, Matrix& grad_sq, Matrix& delta_sq, double rho,
                          double eps) {
  slot.check_shapes();
  if (!all_finite(slot.grad)) throw TrainingError("non-finite gradient in " + slot.name);
  for (std::size_t i = 0; i < slot.value.size(); ++i) {
    const double g = slot.grad.data[i];
    double& eg2 = grad_sq.data[i];
    double& ed2 = delta_sq.data[i];
    eg2 = rho * eg2 + (1.0 - rho) * g * g;
    const double dx = -std::sqrt((ed2 + eps) / (eg2 + eps)) * g;
    ed2 = rho * ed2 + (1.0 - rho) * dx * dx;
    slot.value.data[i] += dx;
  }
  slot.reset_grad();
}

inline void adadelta_apply(std::span<ParamSlot* const> slots, AdadeltaState& state) {
  for (std::size_t i = 0; i < slots.size(); ++i)
    adadelta_step(*slots[i], state.grad_sq[i], state.delta_sq[i], state.rho, state.eps);
}

// ---------------------------------------------------------------------------
// Initialization: weight matrices and factor/embedding tables uniform in
// [-init_range, init_range] from the seeded generator, biases zero.

inline bool is_bias_slot(const ParamSlot& slot) {
  return slot.name.size() >= 2 && slot.name.ends_with("_b");
}

inline void init_slots(std::span<ParamSlot* const> slots, double init_range,
                       std::uint64_t seed) {
  Rng rng(mix_seed(seed, 101));
  for (ParamSlot* s : slots) {
    if (is_bias_slot(*s)) {
      s->value.zero();
    } else {
      s->value.fill_uniform(rng, -init_range, init_range);
    }
    s->reset_grad();
  }
}

inline NrtParams init_params(const Hypers& hypers, std::size_t users, std::size_t items,
                             std::size_t vocab, std::uint64_t seed) {
  NrtParams params(hypers, users, items, vocab);
  auto slots = params.slots();
  init_slots(slots, hypers.init_range, seed);
  return params;
}

// ---------------------------------------------------------------------------
// Training loop with validation-based model selection.

struct EpochRow {
  std::size_t epoch = 0;
  double joint = 0.0;
  double rating = 0.0;
  double review = 0.0;
  double tips = 0.0;
  double val_mae = 0.0;
  double val_rmse = 0.0;
  double seconds = 0.0;
  bool best = false;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  std::size_t best_epoch = 0;
  bool aborted = false;        // non-finite loss interrupted the run
  std::string abort_reason;
};

struct TrainOptions {
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  // Keep the best-validation-RMSE parameters (default) or the final ones
  // (overfit experiments).
  bool keep_final = false;
  // Called after every epoch row is finalized (progress reporting).
  std::function<void(const EpochRow&)> on_epoch;
};

inline RatingEval evaluate_ratings(const NrtParams& params,
                                   const std::vector<Interaction>& part) {
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(part.size());
  // Chunked batched forward; plenty for validation scoring.
  const std::size_t chunk = 512;
  for (std::size_t start = 0; start < part.size(); start += chunk) {
    const std::size_t end = std::min(part.size(), start + chunk);
    std::vector<int> users, items;
    for (std::size_t i = start; i < end; ++i) {
      users.push_back(part[i].user);
      items.push_back(part[i].item);
    }
    RatingForward fwd = rating_forward(params, users, items);
    for (std::size_t i = start; i < end; ++i)
      pairs.emplace_back(part[i].rating, fwd.rhat(0, i - start));
  }
  return rating_metrics(pairs);
}

struct TrainResult {
  NrtParams params;          // best-validation parameters
  AdadeltaState state;       // optimizer state at the end of the run
  TrainReport report;
};

// Epoch loop: shuffle batches, joint backward, Adadelta step per slot, then
// validation MAE/RMSE. Keeps the parameters of the best validation RMSE and
// stops after `patience` epochs without improvement. A non-finite loss
// aborts the run and the best checkpoint so far is returned.
inline TrainResult train(const PreparedCorpus& corpus, const Hypers& hypers,
                         const TrainOptions& options) {
  hypers.validate();
  if (corpus.splits.train.empty()) throw UsageError("train: empty training split");
  const std::vector<Interaction>& val_part =
      corpus.splits.valid.empty() ? corpus.splits.train : corpus.splits.valid;

  TrainResult result{
      init_params(hypers, corpus.splits.user_count, corpus.splits.item_count,
                  corpus.vocab.size(), options.seed),
      AdadeltaState{},
      TrainReport{}};
  auto slots = result.params.slots();
  result.state = AdadeltaState::for_slots(slots, hypers.adadelta_rho, hypers.adadelta_eps);

  NrtParams best = result.params;
  double best_rmse = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;

  Batcher batcher(corpus.splits.train, hypers.batch_size, mix_seed(options.seed, 7));
  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRow row;
    row.epoch = epoch;
    std::size_t batches_done = 0;
    try {
      for (const Batch& batch : batcher.epoch(epoch)) {
        const HeadLosses losses = joint_loss_and_backward(result.params, batch);
        adadelta_apply(slots, result.state);
        row.joint += losses.joint;
        row.rating += losses.rating;
        row.review += losses.review;
        row.tips += losses.tips;
        ++batches_done;
      }
    } catch (const TrainingError& err) {
      result.report.aborted = true;
      result.report.abort_reason = err.what();
      break;
    }
    if (batches_done > 0) {
      const double inv = 1.0 / static_cast<double>(batches_done);
      row.joint *= inv;
      row.rating *= inv;
      row.review *= inv;
      row.tips *= inv;
    }
    const RatingEval val = evaluate_ratings(result.params, val_part);
    row.val_mae = val.mae;
    row.val_rmse = val.rmse;
    if (val.rmse < best_rmse) {
      best_rmse = val.rmse;
      best = result.params;
      best_epoch = epoch;
      since_best = 0;
      row.best = true;
    } else {
      ++since_best;
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.report.rows.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
    if (options.patience > 0 && since_best >= options.patience) break;
  }
  result.report.best_epoch = best_epoch;
  if (!options.keep_final) result.params = std::move(best);
  return result;
}

}  // namespace nrt
