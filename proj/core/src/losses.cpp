#include "egsnet/losses.hpp"

#include <cmath>

#include "egsnet/errors.hpp"

namespace egsnet {

torch::Tensor emotion_loss(const torch::Tensor& logits, const torch::Tensor& labels,
                           const torch::Tensor& present) {
  if (present.dim() != 1 || present.size(0) != logits.size(1)) {
    throw DataError("present-class mask must have one entry per classifier output");
  }
  if (!present.index_select(0, labels).all().item<bool>()) {
    throw DataError("emotion label outside the domain's present classes");
  }
  auto masked = logits.masked_fill(present.logical_not().unsqueeze(0),
                                   -std::numeric_limits<float>::infinity());
  return torch::nll_loss(torch::log_softmax(masked, 1), labels);
}

torch::Tensor similarity_loss(const torch::Tensor& scores, const torch::Tensor& query_labels) {
  if (scores.size(0) != query_labels.size(0)) {
    throw DataError("score matrix and query labels disagree on the number of queries");
  }
  return torch::nll_loss(torch::log_softmax(scores, 1), query_labels);
}

torch::Tensor joint_loss(const torch::Tensor& l_sim, const torch::Tensor& l_emo,
                         double lambda_emo) {
  return l_sim + lambda_emo * l_emo;
}

torch::Tensor alignment_penalty(const torch::Tensor& feats_a, const torch::Tensor& feats_b) {
  if (feats_a.sizes() != feats_b.sizes()) {
    throw DataError("alignment penalty requires equally shaped feature matrices");
  }
  return (feats_a - feats_b).pow(2).sum(1).mean();
}

double theta_schedule(int64_t n_e, const LossConfig& cfg) {
  if (!cfg.weight_decay_enabled) return cfg.theta0;
  return cfg.theta0 * std::pow(cfg.theta_gamma, static_cast<double>(n_e / cfg.theta_step));
}

torch::Tensor emotion_alternate_loss(const torch::Tensor& l_emo, const torch::Tensor& penalty,
                                     double theta) {
  return l_emo + theta * penalty;
}

torch::Tensor similarity_alternate_loss(const torch::Tensor& l_sim, const torch::Tensor& penalty,
                                        double theta) {
  return l_sim + theta * penalty;
}

}  // namespace egsnet
