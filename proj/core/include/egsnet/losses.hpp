#pragma once

#include <torch/torch.h>

#include "egsnet/config.hpp"

namespace egsnet {

// Mean cross-entropy over the batch with the softmax restricted to the
// classes present in the batch's domain (other columns masked to -inf).
// `present` is a bool tensor over the unified label space; every label must
// be a present class.
torch::Tensor emotion_loss(const torch::Tensor& logits, const torch::Tensor& labels,
                           const torch::Tensor& present);

// Mean cross-entropy of softmax(scores) against query way labels.
torch::Tensor similarity_loss(const torch::Tensor& scores, const torch::Tensor& query_labels);

// l_sim + lambda_emo * l_emo.
torch::Tensor joint_loss(const torch::Tensor& l_sim, const torch::Tensor& l_emo,
                         double lambda_emo);

// Mean over rows of the squared L2 distance between paired feature rows.
torch::Tensor alignment_penalty(const torch::Tensor& feats_a, const torch::Tensor& feats_b);

// Step-decay alignment weight: theta0 * gamma^floor(n_e / step); constant
// theta0 when the decay is switched off.
double theta_schedule(int64_t n_e, const LossConfig& cfg);

// Alternating-stage objectives: primary loss plus the weighted alignment
// penalty (the frozen branch's features enter the penalty without gradient).
torch::Tensor emotion_alternate_loss(const torch::Tensor& l_emo, const torch::Tensor& penalty,
                                     double theta);
torch::Tensor similarity_alternate_loss(const torch::Tensor& l_sim, const torch::Tensor& penalty,
                                        double theta);

}  // namespace egsnet
