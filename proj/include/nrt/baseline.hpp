#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nrt/checkpoint.hpp"
#include "nrt/corpus.hpp"
#include "nrt/train.hpp"

namespace nrt {

// Biased inner-product latent factor model:
//   rhat = u . v + b_u + b_i + b
// Sanity yardstick for the neural rating head, trained through the same
// optimizer and batching machinery.
class MfParams {
 public:
  MfParams(std::size_t factor_dim, std::size_t users, std::size_t items)
      : factor_dim_(factor_dim), num_users_(users), num_items_(items) {
    if (factor_dim == 0) throw UsageError("mf: factor dimension must be >= 1");
    if (users == 0 || items == 0) throw UsageError("mf: needs at least one user and item");
    user_factors = ParamSlot("user_factors", factor_dim, users);
    item_factors = ParamSlot("item_factors", factor_dim, items);
    user_bias = ParamSlot("user_bias_b", 1, users);
    item_bias = ParamSlot("item_bias_b", 1, items);
    global_bias = ParamSlot("global_bias_b", 1, 1);
  }

  std::size_t factor_dim() const { return factor_dim_; }
  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }

  std::vector<ParamSlot*> slots() {
    return {&user_factors, &item_factors, &user_bias, &item_bias, &global_bias};
  }

  // Everything except the global bias shrinks under the L2 penalty, so the
  // lambda -> infinity limit predicts the global bias alone.
  std::vector<ParamSlot*> regularized_slots() {
    return {&user_factors, &item_factors, &user_bias, &item_bias};
  }

  void reset_grads() {
    for (ParamSlot* s : slots()) s->reset_grad();
  }

  ParamSlot user_factors, item_factors, user_bias, item_bias, global_bias;

 private:
  std::size_t factor_dim_;
  std::size_t num_users_;
  std::size_t num_items_;
};

inline double mf_predict(const MfParams& p, int user, int item) {
  const auto u = static_cast<std::size_t>(user);
  const auto i = static_cast<std::size_t>(item);
  if (u >= p.num_users()) throw IndexError("mf_predict: user index out of range");
  if (i >= p.num_items()) throw IndexError("mf_predict: item index out of range");
  double dot = 0.0;
  for (std::size_t k = 0; k < p.factor_dim(); ++k)
    dot += p.user_factors.value(k, u) * p.item_factors.value(k, i);
  return dot + p.user_bias.value(0, u) + p.item_bias.value(0, i) + p.global_bias.value(0, 0);
}

// (1/2B) sum (rhat - r)^2 + lambda * (|U|^2 + |V|^2 + |b_u|^2 + |b_i|^2),
// gradients accumulated into the slots.
inline double mf_loss_and_backward(MfParams& p, const Batch& batch, double lambda) {
  if (batch.size() == 0) throw UsageError("mf: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double sq = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto u = static_cast<std::size_t>(batch.users[b]);
    const auto i = static_cast<std::size_t>(batch.items[b]);
    const double err = mf_predict(p, batch.users[b], batch.items[b]) - batch.ratings[b];
    sq += err * err;
    const double g = err * inv_b;
    for (std::size_t k = 0; k < p.factor_dim(); ++k) {
      p.user_factors.grad(k, u) += g * p.item_factors.value(k, i);
      p.item_factors.grad(k, i) += g * p.user_factors.value(k, u);
    }
    p.user_bias.grad(0, u) += g;
    p.item_bias.grad(0, i) += g;
    p.global_bias.grad(0, 0) += g;
  }
  double reg = 0.0;
  for (ParamSlot* s : p.regularized_slots()) {
    reg += squared_norm(s->value);
    axpy(s->grad, 2.0 * lambda, s->value);
  }
  const double loss = sq * inv_b * 0.5 + lambda * reg;
  if (!std::isfinite(loss)) throw TrainingError("mf loss is not finite");
  return loss;
}

inline double mf_loss(MfParams& p, const Batch& batch, double lambda) {
  if (batch.size() == 0) throw UsageError("mf: empty batch");
  double sq = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double err = mf_predict(p, batch.users[b], batch.items[b]) - batch.ratings[b];
    sq += err * err;
  }
  double reg = 0.0;
  for (ParamSlot* s : p.regularized_slots()) reg += squared_norm(s->value);
  return sq / (2.0 * static_cast<double>(batch.size())) + lambda * reg;
}

inline RatingEval mf_evaluate(const MfParams& p, const std::vector<Interaction>& part) {
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(part.size());
  for (const Interaction& it : part)
    pairs.emplace_back(it.rating, mf_predict(p, it.user, it.item));
  return rating_metrics(pairs);
}

struct MfTrainOptions {
  std::size_t factor_dim = 10;
  double lambda = 1e-4;
  std::uint64_t seed = 1;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::size_t batch_size = 200;
  double init_range = 0.1;
  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-6;
};

struct MfTrainResult {
  MfParams params;
  TrainReport report;
  AdadeltaState state;
};

inline MfTrainResult mf_train(const PreparedCorpus& corpus, const MfTrainOptions& options) {
  if (corpus.splits.train.empty()) throw UsageError("mf_train: empty training split");
  const std::vector<Interaction>& val_part =
      corpus.splits.valid.empty() ? corpus.splits.train : corpus.splits.valid;

  MfTrainResult result{
      MfParams(options.factor_dim, corpus.splits.user_count, corpus.splits.item_count),
      TrainReport{}, AdadeltaState{}};
  auto slots = result.params.slots();
  init_slots(slots, options.init_range, options.seed);
  result.state = AdadeltaState::for_slots(slots, options.adadelta_rho, options.adadelta_eps);

  MfParams best = result.params;
  double best_rmse = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  Batcher batcher(corpus.splits.train, options.batch_size, mix_seed(options.seed, 7));
  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    EpochRow row;
    row.epoch = epoch;
    std::size_t batches_done = 0;
    try {
      for (const Batch& batch : batcher.epoch(epoch)) {
        row.joint += mf_loss_and_backward(result.params, batch, options.lambda);
        adadelta_apply(slots, result.state);
        ++batches_done;
      }
    } catch (const TrainingError& err) {
      result.report.aborted = true;
      result.report.abort_reason = err.what();
      break;
    }
    if (batches_done > 0) row.joint /= static_cast<double>(batches_done);
    row.rating = row.joint;
    const RatingEval val = mf_evaluate(result.params, val_part);
    row.val_mae = val.mae;
    row.val_rmse = val.rmse;
    if (val.rmse < best_rmse) {
      best_rmse = val.rmse;
      best = result.params;
      result.report.best_epoch = epoch;
      since_best = 0;
      row.best = true;
    } else {
      ++since_best;
    }
    result.report.rows.push_back(row);
    if (options.patience > 0 && since_best >= options.patience) break;
  }
  result.params = std::move(best);
  return result;
}

// MF checkpoints reuse the container with a distinct model_type tag.
inline void save_mf_checkpoint(MfParams& params, const MfTrainOptions& options,
                               std::uint64_t vocab_hash, const std::string& path) {
  ContainerWriter writer("checkpoint");
  auto& manifest = writer.manifest();
  manifest["model_type"] = "mf";
  manifest["vocab_hash"] = vocab_hash;
  manifest["num_users"] = params.num_users();
  manifest["num_items"] = params.num_items();
  manifest["factor_dim"] = params.factor_dim();
  manifest["lambda"] = options.lambda;
  for (ParamSlot* s : params.slots()) writer.add_matrix("param." + s->name, s->value);
  writer.write(path);
}

struct LoadedMfCheckpoint {
  MfParams params;
  std::uint64_t vocab_hash = 0;
};

inline LoadedMfCheckpoint load_mf_checkpoint(const std::string& path) {
  ContainerReader reader(path);
  if (reader.kind() != "checkpoint")
    throw CheckpointError(path + ": container kind '" + reader.kind() +
                          "', expected checkpoint");
  const auto& manifest = reader.manifest();
  if (manifest.value("model_type", "") != "mf")
    throw CheckpointError(path + ": model_type '" + manifest.value("model_type", "?") +
                          "', expected mf");
  LoadedMfCheckpoint out{MfParams(manifest.at("factor_dim").get<std::size_t>(),
                                  manifest.at("num_users").get<std::size_t>(),
                                  manifest.at("num_items").get<std::size_t>()),
                         manifest.at("vocab_hash").get<std::uint64_t>()};
  for (ParamSlot* s : out.params.slots()) {
    Matrix value = reader.read_matrix("param." + s->name);
    if (!value.same_shape(s->value))
      throw CheckpointError(path + ": param " + s->name + " has shape " + value.shape_str() +
                            ", expected " + s->value.shape_str());
    s->value = std::move(value);
  }
  return out;
}

}  // namespace nrt
