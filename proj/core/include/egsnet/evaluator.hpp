#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "egsnet/config.hpp"
#include "egsnet/datasets.hpp"
#include "egsnet/model.hpp"

namespace egsnet {

struct EvalReport {
  std::string split_name;
  std::string metric;
  int64_t n_way = 0, k_shot = 0, q_queries = 0;
  int64_t num_tasks = 0;
  double mean_accuracy = 0.0;
  double ci95_halfwidth = 0.0;  // 1.96 * sample std / sqrt(num_tasks)
  std::vector<double> per_task_accuracies;
};

// num_tasks few-shot episodes with per-task generators derived from
// base seed + task index; the domain is encoded once (inference mode) and
// episodes are assembled in feature space, which is equivalent to encoding
// per episode because inference-mode encoding is per-image deterministic.
EvalReport meta_test(Encoder& encoder, const std::string& metric, RelationMetric* relation,
                     const Domain& domain, int64_t n_way, int64_t k_shot, int64_t q_queries,
                     int64_t num_tasks, uint64_t seed);

// Prototype-metric meta-test (nearest class centroid in feature space).
EvalReport nearest_centroid_eval(Encoder& encoder, const Domain& domain, int64_t n_way,
                                 int64_t k_shot, int64_t q_queries, int64_t num_tasks,
                                 uint64_t seed);

// Davies-Bouldin index over labeled features: mean over classes of the worst
// (S_i + S_j) / ||c_i - c_j|| ratio; lower means tighter, better-separated
// clusters. Computed in double precision.
double db_index(const torch::Tensor& features, const torch::Tensor& labels);

struct SuiteReport {
  std::string checkpoint_path;
  std::string config_hash;
  std::string metric;
  int64_t n_way = 0, q_queries = 0, num_tasks = 0;
  uint64_t eval_seed = 0;
  std::vector<EvalReport> evaluations;       // splits x shots
  double db_basic = 0.0, db_compound = 0.0;  // on similarity-encoder features
};

// Runs meta_test over the requested target splits ("target", "basic",
// "compound") and shot counts, plus the DB index on both subsets.
SuiteReport evaluate_suite(ModelState& model, const std::string& metric,
                           const DomainRegistry& registry, const std::vector<std::string>& splits,
                           const std::vector<int64_t>& shots, int64_t n_way,
                           const EvalConfig& eval_cfg, int64_t train_q);

// report.json + report.csv under dir.
void write_report_bundle(const SuiteReport& report, const std::string& dir);
// Parses + schema-validates a report.json (throws ArtifactMismatchError).
SuiteReport read_report_json(const std::string& path);

// Encodes a domain in inference mode, in fixed-size chunks.
torch::Tensor encode_domain(Encoder& encoder, const Domain& domain, int64_t chunk = 256);

}  // namespace egsnet
