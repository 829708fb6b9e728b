#include "egsnet/metrics.hpp"

#include "egsnet/errors.hpp"

namespace egsnet {

namespace {

int64_t way_count(const torch::Tensor& support_labels) {
  if (support_labels.dim() != 1 || support_labels.size(0) == 0) {
    throw DataError("support labels must be a non-empty 1-d tensor of way indices");
  }
  return support_labels.max().item<int64_t>() + 1;
}

std::vector<std::vector<int64_t>> rows_per_way(const torch::Tensor& support_labels, int64_t n) {
  std::vector<std::vector<int64_t>> rows(static_cast<size_t>(n));
  auto acc = support_labels.accessor<int64_t, 1>();
  for (int64_t i = 0; i < support_labels.size(0); ++i) {
    rows[static_cast<size_t>(acc[i])].push_back(i);
  }
  for (int64_t w = 0; w < n; ++w) {
    if (rows[static_cast<size_t>(w)].empty()) {
      throw DataError("way " + std::to_string(w) + " has no support samples");
    }
  }
  return rows;
}

}  // namespace

torch::Tensor way_prototypes(const torch::Tensor& support_feats,
                             const torch::Tensor& support_labels) {
  const int64_t n = way_count(support_labels);
  auto rows = rows_per_way(support_labels, n);
  std::vector<torch::Tensor> protos;
  protos.reserve(static_cast<size_t>(n));
  for (int64_t w = 0; w < n; ++w) {
    auto idx = torch::tensor(rows[static_cast<size_t>(w)], torch::kInt64);
    protos.push_back(support_feats.index_select(0, idx).mean(0));
  }
  return torch::stack(protos);
}

torch::Tensor prototype_scores(const torch::Tensor& support_feats,
                               const torch::Tensor& support_labels,
                               const torch::Tensor& query_feats) {
  auto protos = way_prototypes(support_feats, support_labels);
  // Broadcast difference keeps the gradient defined even at zero distance.
  auto diff = query_feats.unsqueeze(1) - protos.unsqueeze(0);
  return -diff.pow(2).sum(-1);
}

torch::Tensor cosine_match_scores(const torch::Tensor& support_feats,
                                  const torch::Tensor& support_labels,
                                  const torch::Tensor& query_feats, double eps) {
  const int64_t n = way_count(support_labels);
  auto rows = rows_per_way(support_labels, n);
  auto sn = support_feats / support_feats.norm(2, 1, true).clamp_min(eps);
  auto qn = query_feats / query_feats.norm(2, 1, true).clamp_min(eps);
  auto pair_cos = qn.matmul(sn.t());  // Q x (N*K)
  std::vector<torch::Tensor> cols;
  cols.reserve(static_cast<size_t>(n));
  for (int64_t w = 0; w < n; ++w) {
    auto idx = torch::tensor(rows[static_cast<size_t>(w)], torch::kInt64);
    cols.push_back(pair_cos.index_select(1, idx).mean(1));
  }
  return torch::stack(cols, 1);
}

torch::Tensor relation_scores(RelationMetric& relation, const torch::Tensor& support_feats,
                              const torch::Tensor& support_labels,
                              const torch::Tensor& query_feats) {
  auto protos = way_prototypes(support_feats, support_labels);
  const int64_t n = protos.size(0);
  const int64_t q = query_feats.size(0);
  auto proto_rep = protos.unsqueeze(0).expand({q, n, protos.size(1)});
  auto query_rep = query_feats.unsqueeze(1).expand({q, n, query_feats.size(1)});
  auto pairs = torch::cat({proto_rep, query_rep}, 2).reshape({q * n, 2 * protos.size(1)});
  return relation.forward(pairs).reshape({q, n});
}

torch::Tensor metric_scores(const std::string& variant, RelationMetric* relation,
                            const torch::Tensor& support_feats,
                            const torch::Tensor& support_labels,
                            const torch::Tensor& query_feats) {
  if (variant == "prototype") return prototype_scores(support_feats, support_labels, query_feats);
  if (variant == "cosine") return cosine_match_scores(support_feats, support_labels, query_feats);
  if (variant == "relation") {
    if (relation == nullptr) throw ConfigError("relation metric selected but not initialized");
    return relation_scores(*relation, support_feats, support_labels, query_feats);
  }
  throw ConfigError("unknown metric '" + variant + "'");
}

torch::Tensor assign_nearest(const torch::Tensor& scores) {
  // Explicit scan instead of torch::argmax so the tie rule (lowest way wins)
  // is guaranteed rather than implementation-defined.
  auto s = scores.detach().to(torch::kDouble).contiguous();
  auto acc = s.accessor<double, 2>();
  auto pred = torch::empty({s.size(0)}, torch::kInt64);
  auto pacc = pred.accessor<int64_t, 1>();
  for (int64_t q = 0; q < s.size(0); ++q) {
    int64_t best = 0;
    for (int64_t w = 1; w < s.size(1); ++w) {
      if (acc[q][w] > acc[q][best]) best = w;
    }
    pacc[q] = best;
  }
  return pred;
}

torch::Tensor assign_nearest(const torch::Tensor& scores,
                             const std::vector<int64_t>& way_to_domain_label) {
  auto pred = assign_nearest(scores);
  auto map = torch::tensor(way_to_domain_label, torch::kInt64);
  return map.index_select(0, pred);
}

double episode_accuracy(const torch::Tensor& scores, const torch::Tensor& query_labels) {
  auto pred = assign_nearest(scores);
  return pred.eq(query_labels).to(torch::kDouble).mean().item<double>();
}

}  // namespace egsnet
