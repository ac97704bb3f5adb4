#include <doctest.h>

#include <cmath>

#include "nrt/gradcheck.hpp"
#include "nrt/model.hpp"
#include "nrt/train.hpp"
#include "support/toy.hpp"

using namespace nrt;
using testsupport::ToyInstance;
using testsupport::toy_hypers;

TEST_CASE("rating head with zero weights passes the bias through") {
  Hypers h = toy_hypers();
  NrtParams p(h, 2, 2, 6);  // all zeros
  p.rating_out_b.value(0, 0) = 3.0;
  for (int u = 0; u < 2; ++u)
    for (int i = 0; i < 2; ++i) CHECK(rating_predict(p, u, i) == doctest::Approx(3.0));
}

TEST_CASE("rating head with one layer is a single nonlinearity plus readout") {
  Hypers h = toy_hypers();
  h.rating_layers = 1;
  NrtParams p(h, 2, 2, 6);
  CHECK(p.rating_hidden_w.empty());
  const int u[1] = {0};
  const int i[1] = {1};
  RatingForward fwd = rating_forward(p, u, i);
  CHECK(fwd.hidden.size() == 1);
  // zero params: sigmoid(0) = 0.5 everywhere, readout 0
  for (double v : fwd.hidden[0].data) CHECK(v == 0.5);
  CHECK(fwd.rhat(0, 0) == 0.0);
}

TEST_CASE("rating loss hand values") {
  Matrix rhat(1, 2);
  rhat(0, 0) = 4.0;
  rhat(0, 1) = 3.0;
  const double truth_a[2] = {5.0, 3.0};
  CHECK(rating_loss(rhat, truth_a) == doctest::Approx(0.25).epsilon(1e-12));

  Matrix one(1, 1);
  one(0, 0) = 4.0;
  const double truth_b[1] = {5.0};
  CHECK(rating_loss(one, truth_b) == doctest::Approx(0.5).epsilon(1e-12));

  const double truth_c[2] = {4.0, 3.0};
  CHECK(rating_loss(rhat, truth_c) == 0.0);

  CHECK_THROWS_AS(rating_loss(rhat, std::span<const double>{}), UsageError);
}

TEST_CASE("review head: zero weights give the uniform distribution") {
  Hypers h = toy_hypers();
  NrtParams p(h, 2, 2, 6);
  const int u[1] = {0};
  const int i[1] = {0};
  RatingForward rf = rating_forward(p, u, i);
  ReviewForward cf = review_forward(p, rf.u_cols, rf.v_cols);
  for (double v : cf.probs.data) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  double sum = 0.0;
  for (double v : cf.probs.data) {
    CHECK(v > 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("review NLL hand values") {
  Matrix logp(2, 1);
  logp(0, 0) = std::log(0.5);
  logp(1, 0) = std::log(0.5);
  std::vector<std::pair<int, std::int64_t>> bow = {{0, 2}};
  CHECK(review_loss(logp, 0, bow) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(review_loss(logp, 0, {}) == 0.0);

  // more mass on the bow's word means lower loss
  Matrix better(2, 1);
  better(0, 0) = std::log(0.9);
  better(1, 0) = std::log(0.1);
  CHECK(review_loss(better, 0, bow) < review_loss(logp, 0, bow));
}

TEST_CASE("rating one-hot follows floor-and-clamp") {
  Matrix v = rating_to_onehot(4.321, 6);
  const double expect[6] = {0, 0, 0, 0, 1, 0};
  for (std::size_t i = 0; i < 6; ++i) CHECK(v(i, 0) == expect[i]);

  CHECK(rating_to_onehot(-0.7, 6)(0, 0) == 1.0);
  CHECK(rating_to_onehot(9.3, 6)(5, 0) == 1.0);
  CHECK(rating_to_onehot(5.0, 6)(5, 0) == 1.0);

  SUBCASE("exactly one nonzero entry equal to one") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      Matrix onehot = rating_to_onehot(rng.uniform(-3.0, 9.0), 6);
      int nonzero = 0;
      for (double x : onehot.data) {
        if (x != 0.0) {
          ++nonzero;
          CHECK(x == 1.0);
        }
      }
      CHECK(nonzero == 1);
    }
  }
}

TEST_CASE("decoder init: zero parameters give the zero state") {
  Hypers h = toy_hypers();
  NrtParams p(h, 2, 2, 6);
  Matrix u(3, 1), v(3, 1), hc(5, 1);
  Matrix onehot = rating_to_onehot(2.0, 6);
  Matrix h0 = decoder_init(p, u, v, onehot, hc);
  for (double x : h0.data) CHECK(x == 0.0);
}

TEST_CASE("decoder init reacts to the rating level exactly through its columns") {
  ToyInstance toy(21);
  NrtParams& p = toy.params;
  Matrix u(3, 1), v(3, 1), hc(5, 1);
  Matrix h_level2 = decoder_init(p, u, v, rating_to_onehot(2.4, 6), hc);
  Matrix h_level3 = decoder_init(p, u, v, rating_to_onehot(3.4, 6), hc);
  bool differs = false;
  for (std::size_t i = 0; i < h_level2.size(); ++i)
    differs = differs || h_level2.data[i] != h_level3.data[i];
  CHECK(differs);

  // force columns 2 and 3 equal: levels become indistinguishable
  for (std::size_t r = 0; r < 5; ++r)
    p.dec_init_rating_w.value(r, 3) = p.dec_init_rating_w.value(r, 2);
  Matrix h2 = decoder_init(p, u, v, rating_to_onehot(2.4, 6), hc);
  Matrix h3 = decoder_init(p, u, v, rating_to_onehot(3.4, 6), hc);
  for (std::size_t i = 0; i < h2.size(); ++i) CHECK(h2.data[i] == h3.data[i]);
}

TEST_CASE("GRU step: zero parameters force r=z=0.5, g=0, h = h_prev/2") {
  Hypers h = toy_hypers();
  NrtParams p(h, 2, 2, 6);
  Matrix h_prev(5, 1);
  for (std::size_t i = 0; i < 5; ++i) h_prev(i, 0) = 0.1 * static_cast<double>(i + 1);
  GruStep step = gru_step_token(p, h_prev, 2);
  for (double v : step.reset.data) CHECK(v == 0.5);
  for (double v : step.update.data) CHECK(v == 0.5);
  for (double v : step.candidate.data) CHECK(v == 0.0);
  for (std::size_t i = 0; i < 5; ++i) CHECK(step.state(i, 0) == 0.5 * h_prev(i, 0));

  Matrix zero_state(5, 1);
  GruStep from_zero = gru_step_token(p, zero_state, 3);
  for (double v : from_zero.state.data) CHECK(v == 0.0);
}

TEST_CASE("GRU state stays inside (-1,1)") {
  ToyInstance toy(31);
  Rng rng(77);
  Matrix state(5, 1);
  for (std::size_t i = 0; i < 5; ++i) state(i, 0) = rng.uniform(-0.99, 0.99);
  for (int t = 0; t < 100; ++t) {
    const int token = static_cast<int>(rng.next_below(6));
    state = gru_step_token(toy.params, state, token).state;
    for (double v : state.data) CHECK((v > -1.0 && v < 1.0));
  }
}

TEST_CASE("word distribution: uniform under zero weights, argmax matches logits") {
  Hypers h = toy_hypers();
  NrtParams p(h, 2, 2, 6);
  Matrix state(5, 1);
  Matrix probs = word_dist(p, state);
  for (double v : probs.data) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

  ToyInstance toy(41);
  Matrix s2(5, 1);
  Rng rng(13);
  for (double& v : s2.data) v = rng.uniform(-1.0, 1.0);
  Matrix logits = affine(toy.params.dec_out_w.value, s2, toy.params.dec_out_b.value);
  Matrix p2 = word_dist(toy.params, s2);
  CHECK(argmax_column(p2, 0) == argmax_column(logits, 0));
  double sum = 0.0;
  for (double v : p2.data) sum += v;
  CHECK(std::fabs(sum - 1.0) <= 1e-12);
}

TEST_CASE("tips NLL: uniform model scores 2 ln 2 on a one-word tip") {
  Hypers h = toy_hypers();
  h.user_dim = 1;
  h.item_dim = 1;
  h.word_dim = 1;
  h.hidden_dim = 1;
  h.rating_layers = 1;
  h.rating_levels = 2;
  NrtParams p(h, 1, 1, 2);  // zero params, |V| = 2 -> uniform everywhere
  const double loss = tips_loss(p, 0, 0, {0, Vocabulary::kEosId});
  CHECK(loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(tips_loss(p, 0, 0, {0}), UsageError);
}

TEST_CASE("tips NLL decreases when gold-token probability rises") {
  Hypers h = toy_hypers();
  NrtParams p(h, 2, 2, 6);
  const std::vector<int> tips = {2, Vocabulary::kEosId};
  const double before = tips_loss(p, 0, 0, tips);
  // raise the logit bias of both gold tokens
  p.dec_out_b.value(2, 0) = 0.5;
  p.dec_out_b.value(Vocabulary::kEosId, 0) = 0.5;
  const double after = tips_loss(p, 0, 0, tips);
  CHECK(after < before);
}

TEST_CASE("joint loss reduces to regularized rating regression when text weights vanish") {
  Hypers h = toy_hypers();
  h.lambda_review = 0.0;
  h.lambda_tips = 0.0;
  ToyInstance toy(51, h);
  HeadLosses losses = joint_loss(toy.params, toy.batch);
  CHECK(losses.joint == doctest::Approx(h.lambda_rating * losses.rating +
                                        h.lambda_reg * losses.reg)
                            .epsilon(1e-12));
}

TEST_CASE("with only the L2 term, every regularized gradient is 2*lambda*param") {
  Hypers h = toy_hypers();
  h.lambda_rating = 0.0;
  h.lambda_review = 0.0;
  h.lambda_tips = 0.0;
  h.lambda_reg = 0.01;
  ToyInstance toy(61, h);
  toy.params.reset_grads();
  joint_loss_and_backward(toy.params, toy.batch);
  for (ParamSlot* slot : toy.params.regularized_slots()) {
    for (std::size_t i = 0; i < slot->value.size(); ++i)
      CHECK(slot->grad.data[i] ==
            doctest::Approx(2.0 * h.lambda_reg * slot->value.data[i]).epsilon(1e-12));
  }
  for (double g : toy.params.word_embeddings.grad.data) CHECK(g == 0.0);
}

TEST_CASE("zeroing any single head weight changes the user-factor gradient") {
  const auto du_with = [&](double lr, double lc, double ls) {
    Hypers h = toy_hypers();
    h.lambda_rating = lr;
    h.lambda_review = lc;
    h.lambda_tips = ls;
    ToyInstance toy(71, h);
    toy.params.reset_grads();
    joint_loss_and_backward(toy.params, toy.batch);
    return toy.params.user_factors.grad;
  };
  const Matrix base = du_with(1, 1, 1);
  for (const Matrix& variant : {du_with(0, 1, 1), du_with(1, 0, 1), du_with(1, 1, 0)}) {
    bool differs = false;
    for (std::size_t i = 0; i < base.size(); ++i)
      differs = differs || std::fabs(base.data[i] - variant.data[i]) > 1e-12;
    CHECK(differs);
  }
}

TEST_CASE("joint loss is deterministic") {
  ToyInstance a(81), b(81);
  a.params.reset_grads();
  b.params.reset_grads();
  HeadLosses la = joint_loss_and_backward(a.params, a.batch);
  HeadLosses lb = joint_loss_and_backward(b.params, b.batch);
  CHECK(la.joint == lb.joint);
  CHECK(la.rating == lb.rating);
  CHECK(la.review == lb.review);
  CHECK(la.tips == lb.tips);
  auto slots_a = a.params.slots();
  auto slots_b = b.params.slots();
  for (std::size_t s = 0; s < slots_a.size(); ++s)
    for (std::size_t i = 0; i < slots_a[s]->grad.size(); ++i)
      CHECK(slots_a[s]->grad.data[i] == slots_b[s]->grad.data[i]);
}

TEST_CASE("full joint gradient matches finite differences on the toy instance") {
  ToyInstance toy(91);
  toy.params.reset_grads();
  joint_loss_and_backward(toy.params, toy.batch);
  const auto loss = [&]() { return joint_loss(toy.params, toy.batch).joint; };
  auto slots = toy.params.slots();
  GradCheckReport report = gradient_check(loss, slots, 1e-4);
  INFO("worst: ", report.worst.param, "[", report.worst.index, "] analytic ",
       report.worst.analytic, " numeric ", report.worst.numeric);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("deeper rating and review stacks pass finite differences") {
  Hypers h = toy_hypers();
  h.rating_layers = 3;
  h.review_layers = 2;
  ToyInstance toy(87, h);
  CHECK(toy.params.review_hidden_w.size() == 1);
  CHECK(toy.params.rating_hidden_w.size() == 2);
  toy.params.reset_grads();
  joint_loss_and_backward(toy.params, toy.batch);
  const auto loss = [&]() { return joint_loss(toy.params, toy.batch).joint; };
  auto slots = toy.params.slots();
  GradCheckReport report = gradient_check(loss, slots, 1e-4);
  INFO("worst: ", report.worst.param, "[", report.worst.index, "]");
  CHECK(report.passed);
}

TEST_CASE("per-head gradients also pass finite differences in isolation") {
  // review path (lambda_tips = 0) and tips path (lambda_review = 0) both
  // reach the shared factors; checking them separately localizes failures.
  for (int head = 0; head < 2; ++head) {
    Hypers h = toy_hypers();
    h.lambda_rating = 0.0;
    h.lambda_reg = 0.0;
    h.lambda_review = head == 0 ? 1.0 : 0.0;
    h.lambda_tips = head == 0 ? 0.0 : 1.0;
    ToyInstance toy(95 + head, h);
    toy.params.reset_grads();
    joint_loss_and_backward(toy.params, toy.batch);
    const auto loss = [&]() { return joint_loss(toy.params, toy.batch).joint; };
    auto slots = toy.params.slots();
    GradCheckReport report = gradient_check(loss, slots, 1e-4);
    INFO("head ", head, " worst: ", report.worst.param, "[", report.worst.index, "]");
    CHECK(report.passed);
  }
}
