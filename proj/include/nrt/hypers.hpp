#pragma once

#include <cstddef>
#include <cstdint>

#include "nrt/errors.hpp"

namespace nrt {

// Every dimension, loss weight, optimizer constant and decoding constant in
// one validated record. Defaults follow the reference experimental setup.
struct Hypers {
  std::size_t user_dim = 300;     // latent factor size for users
  std::size_t item_dim = 300;     // latent factor size for items
  std::size_t word_dim = 300;     // word embedding size
  std::size_t hidden_dim = 400;   // shared hidden size d
  std::size_t rating_layers = 4;  // sigmoid layers in the rating MLP
  std::size_t review_layers = 1;  // sigmoid layers in the review head
  std::size_t gru_layers = 1;     // recurrent layers in the tips decoder
  std::size_t rating_levels = 6;  // one-hot slots for ratings in [0,5]

  double lambda_rating = 1.0;
  double lambda_review = 1.0;
  double lambda_tips = 1.0;
  double lambda_reg = 1e-4;

  std::size_t batch_size = 200;
  double init_range = 0.1;

  std::size_t beam_width = 4;
  std::size_t max_tip_len = 20;  // generated tokens, EOS excluded
  double ln_n = 2.0;             // length-normalization offset
  double ln_alpha = 0.6;         // length-normalization exponent

  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-6;

  void validate() const {
    const auto need = [](bool ok, const char* msg) {
      if (!ok) throw UsageError(msg);
    };
    need(user_dim >= 1 && item_dim >= 1 && word_dim >= 1 && hidden_dim >= 1,
         "hypers: all dimensions must be >= 1");
    need(rating_layers >= 1, "hypers: rating_layers must be >= 1");
    need(review_layers >= 1, "hypers: review_layers must be >= 1");
    need(gru_layers >= 1, "hypers: gru_layers must be >= 1");
    need(gru_layers == 1,
         "hypers: gru_layers > 1 is not supported; the decoder has a single "
         "recurrent layer");
    need(rating_levels >= 1, "hypers: rating_levels must be >= 1");
    need(lambda_rating >= 0 && lambda_review >= 0 && lambda_tips >= 0 && lambda_reg >= 0,
         "hypers: loss weights must be >= 0");
    need(batch_size >= 1, "hypers: batch_size must be >= 1");
    need(init_range > 0, "hypers: init_range must be > 0");
    need(beam_width >= 1, "hypers: beam width must be >= 1");
    need(max_tip_len >= 1, "hypers: max length must be >= 1");
    need(ln_n >= 0, "hypers: ln_n must be >= 0");
    need(ln_alpha >= 0, "hypers: ln_alpha must be >= 0");
    need(adadelta_rho > 0 && adadelta_rho < 1, "hypers: adadelta rho must be in (0,1)");
    need(adadelta_eps > 0, "hypers: adadelta eps must be > 0");
  }
};

}  // namespace nrt
