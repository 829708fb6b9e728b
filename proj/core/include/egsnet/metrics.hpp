#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "egsnet/model.hpp"

namespace egsnet {

// All score matrices are (num queries) x (num ways), higher = more similar,
// so one softmax / argmax path serves every metric variant.

// Per-way mean of support features. support_labels are way indices 0..N-1;
// every way must have at least one support row.
torch::Tensor way_prototypes(const torch::Tensor& support_feats,
                             const torch::Tensor& support_labels);

// score[q][n] = -||query_q - c_n||^2 against way prototypes c_n.
torch::Tensor prototype_scores(const torch::Tensor& support_feats,
                               const torch::Tensor& support_labels,
                               const torch::Tensor& query_feats);

// score[q][n] = mean over way-n support rows of cosine(query_q, support);
// zero-norm vectors are guarded by eps in the denominators.
torch::Tensor cosine_match_scores(const torch::Tensor& support_feats,
                                  const torch::Tensor& support_labels,
                                  const torch::Tensor& query_feats, double eps = 1e-8);

// score[q][n] = comparator(concat(c_n, query_q)) with a learned comparator.
torch::Tensor relation_scores(RelationMetric& relation, const torch::Tensor& support_feats,
                              const torch::Tensor& support_labels,
                              const torch::Tensor& query_feats);

// Dispatch on the config's metric name; `relation` may be null for the
// parameter-free variants.
torch::Tensor metric_scores(const std::string& variant, RelationMetric* relation,
                            const torch::Tensor& support_feats,
                            const torch::Tensor& support_labels,
                            const torch::Tensor& query_feats);

// Row-wise argmax with ties broken toward the lowest way index.
torch::Tensor assign_nearest(const torch::Tensor& scores);
// Same, mapped through way -> domain-label.
torch::Tensor assign_nearest(const torch::Tensor& scores,
                             const std::vector<int64_t>& way_to_domain_label);

// Fraction of rows whose assign_nearest prediction matches the labels.
double episode_accuracy(const torch::Tensor& scores, const torch::Tensor& query_labels);

}  // namespace egsnet
