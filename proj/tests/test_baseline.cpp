#include <doctest.h>

#include <cmath>

#include "nrt/baseline.hpp"
#include "nrt/gradcheck.hpp"
#include "support/toy.hpp"

using namespace nrt;
using testsupport::make_rating_corpus;

namespace {

PreparedCorpus one_interaction_corpus(double rating) {
  RawSplit split;
  RawRecord rec;
  rec.user = "u0";
  rec.item = "i0";
  rec.rating = rating;
  rec.review_text = "single data point";
  rec.tips_text = "single data point";
  split.train.push_back(rec);
  return assemble(split, build_vocab(split.train, 1));
}

}  // namespace

TEST_CASE("mf_predict hand values") {
  MfParams zero(2, 1, 1);
  CHECK(mf_predict(zero, 0, 0) == 0.0);

  MfParams biased(2, 1, 1);
  biased.global_bias.value(0, 0) = 3.7;
  CHECK(mf_predict(biased, 0, 0) == 3.7);

  MfParams rank1(1, 1, 1);
  rank1.user_factors.value(0, 0) = 2.0;
  rank1.item_factors.value(0, 0) = 0.5;
  CHECK(mf_predict(rank1, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(mf_predict(zero, 1, 0), IndexError);
}

TEST_CASE("mf gradient matches finite differences") {
  PreparedCorpus corpus = make_rating_corpus(4, 3, 2, 12, 5);
  MfParams params(3, corpus.splits.user_count, corpus.splits.item_count);
  init_slots(params.slots(), 0.2, 7);
  std::vector<const Interaction*> rows;
  for (const auto& it : corpus.splits.train) rows.push_back(&it);
  Batch batch = make_batch(rows);
  const double lambda = 0.01;

  params.reset_grads();
  mf_loss_and_backward(params, batch, lambda);
  const auto loss = [&]() { return mf_loss(params, batch, lambda); };
  auto slots = params.slots();
  GradCheckReport report = gradient_check(loss, slots, 1e-6);
  INFO("worst ", report.worst.param, " rel ", report.max_rel_error);
  CHECK(report.passed);
}

TEST_CASE("a single interaction is fit to numerical precision") {
  PreparedCorpus corpus = one_interaction_corpus(4.0);
  MfTrainOptions options;
  options.factor_dim = 2;
  options.lambda = 0.0;
  options.max_epochs = 600;
  options.patience = 0;
  options.seed = 3;
  options.batch_size = 1;
  MfTrainResult result = mf_train(corpus, options);
  const double pred = mf_predict(result.params, 0, 0);
  CHECK((pred - 4.0) * (pred - 4.0) < 1e-4);
}

TEST_CASE("a huge L2 weight drives predictions to the global bias") {
  PreparedCorpus corpus = make_rating_corpus(6, 5, 2, 60, 11);
  MfTrainOptions options;
  options.factor_dim = 3;
  options.lambda = 100.0;
  options.max_epochs = 300;
  options.patience = 0;
  options.seed = 9;
  MfTrainResult result = mf_train(corpus, options);
  // Adadelta steps are scale-free, so the penalized parameters hover at a
  // small noise floor instead of reaching exactly zero.
  MfParams fresh(3, corpus.splits.user_count, corpus.splits.item_count);
  init_slots(fresh.slots(), options.init_range, options.seed);
  const double init_norm = std::sqrt(squared_norm(fresh.user_factors.value));
  const double final_norm = std::sqrt(squared_norm(result.params.user_factors.value));
  CHECK(final_norm < 0.05);
  CHECK(final_norm < 0.2 * init_norm);
  CHECK(std::sqrt(squared_norm(result.params.user_bias.value)) < 0.05);
  const double b = result.params.global_bias.value(0, 0);
  CHECK(std::fabs(mf_predict(result.params, 0, 0) - b) < 0.1);
}

TEST_CASE("planted low-rank ratings are recovered") {
  PreparedCorpus corpus = make_rating_corpus(30, 20, 2, 500, 17);
  MfTrainOptions options;
  options.factor_dim = 4;
  options.lambda = 1e-5;
  options.max_epochs = 400;
  options.patience = 0;
  options.seed = 19;
  options.batch_size = 50;
  MfTrainResult result = mf_train(corpus, options);

  RatingEval train_eval = mf_evaluate(result.params, corpus.splits.train);
  INFO("train rmse ", train_eval.rmse);
  CHECK(train_eval.rmse < 0.1);

  // test RMSE beats the constant global-mean predictor
  double mean = 0.0;
  for (const auto& it : corpus.splits.train) mean += it.rating;
  mean /= static_cast<double>(corpus.splits.train.size());
  std::vector<std::pair<double, double>> const_pairs;
  for (const auto& it : corpus.splits.test) const_pairs.emplace_back(it.rating, mean);
  RatingEval const_eval = rating_metrics(const_pairs);
  RatingEval mf_test = mf_evaluate(result.params, corpus.splits.test);
  INFO("mf test rmse ", mf_test.rmse, " constant ", const_eval.rmse);
  CHECK(mf_test.rmse < const_eval.rmse);
}
