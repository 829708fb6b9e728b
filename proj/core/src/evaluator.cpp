#include "egsnet/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "egsnet/errors.hpp"
#include "egsnet/metrics.hpp"
#include "egsnet/rng.hpp"
#include "egsnet/sampler.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace egsnet {

torch::Tensor encode_domain(Encoder& encoder, const Domain& domain, int64_t chunk) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> parts;
  for (int64_t start = 0; start < domain.size(); start += chunk) {
    const int64_t take = std::min(chunk, domain.size() - start);
    parts.push_back(encoder.forward(domain.images.narrow(0, start, take), ForwardMode::Eval));
  }
  return torch::cat(parts);
}

namespace {

void finish_report(EvalReport& r) {
  const auto n = static_cast<double>(r.per_task_accuracies.size());
  double mean = 0.0;
  for (double a : r.per_task_accuracies) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : r.per_task_accuracies) var += (a - mean) * (a - mean);
  const double std_dev = n > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  r.mean_accuracy = mean;
  r.ci95_halfwidth = 1.96 * std_dev / std::sqrt(n);
}

}  // namespace

EvalReport meta_test(Encoder& encoder, const std::string& metric, RelationMetric* relation,
                     const Domain& domain, int64_t n_way, int64_t k_shot, int64_t q_queries,
                     int64_t num_tasks, uint64_t seed) {
  torch::NoGradGuard guard;
  EvalReport report;
  report.split_name = domain.id;
  report.metric = metric;
  report.n_way = n_way;
  report.k_shot = k_shot;
  report.q_queries = q_queries;
  report.num_tasks = num_tasks;
  report.per_task_accuracies.reserve(static_cast<size_t>(num_tasks));

  auto features = encode_domain(encoder, domain);
  auto query_labels = torch::arange(n_way, torch::kInt64).repeat_interleave(q_queries);
  for (int64_t task = 0; task < num_tasks; ++task) {
    auto rng = make_stream(seed + static_cast<uint64_t>(task), "metatest");
    EpisodePlan plan = plan_episode(domain, n_way, k_shot, q_queries, rng);
    auto support = features.index_select(0, torch::tensor(plan.support_indices, torch::kInt64));
    auto query = features.index_select(0, torch::tensor(plan.query_indices, torch::kInt64));
    auto support_labels = torch::arange(n_way, torch::kInt64).repeat_interleave(k_shot);
    auto scores = metric_scores(metric, relation, support, support_labels, query);
    report.per_task_accuracies.push_back(episode_accuracy(scores, query_labels));
  }
  finish_report(report);
  return report;
}

EvalReport nearest_centroid_eval(Encoder& encoder, const Domain& domain, int64_t n_way,
                                 int64_t k_shot, int64_t q_queries, int64_t num_tasks,
                                 uint64_t seed) {
  return meta_test(encoder, "prototype", nullptr, domain, n_way, k_shot, q_queries, num_tasks,
                   seed);
}

double db_index(const torch::Tensor& features, const torch::Tensor& labels) {
  if (features.dim() != 2 || labels.dim() != 1 || features.size(0) != labels.size(0)) {
    throw DataError("db_index expects M x d features with M labels");
  }
  auto f = features.detach().to(torch::kDouble);
  auto l = labels.to(torch::kInt64);
  const int64_t c = l.max().item<int64_t>() + 1;
  if (c < 2) throw DataError("db_index needs at least 2 classes");

  std::vector<torch::Tensor> centroids(static_cast<size_t>(c));
  std::vector<double> scatter(static_cast<size_t>(c));
  for (int64_t i = 0; i < c; ++i) {
    auto idx = (l == i).nonzero().squeeze(1);
    if (idx.numel() == 0) throw DataError("db_index: class " + std::to_string(i) + " is empty");
    auto rows = f.index_select(0, idx);
    centroids[static_cast<size_t>(i)] = rows.mean(0);
    scatter[static_cast<size_t>(i)] =
        (rows - centroids[static_cast<size_t>(i)]).norm(2, 1).mean().item<double>();
  }
  double db = 0.0;
  for (int64_t i = 0; i < c; ++i) {
    double worst = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      if (j == i) continue;
      const double m =
          (centroids[static_cast<size_t>(i)] - centroids[static_cast<size_t>(j)]).norm().item<double>();
      if (m == 0.0) {
        throw DataError("db_index: degenerate clusters (classes " + std::to_string(i) + " and " +
                        std::to_string(j) + " share a centroid)");
      }
      worst = std::max(worst,
                       (scatter[static_cast<size_t>(i)] + scatter[static_cast<size_t>(j)]) / m);
    }
    db += worst;
  }
  return db / static_cast<double>(c);
}

SuiteReport evaluate_suite(ModelState& model, const std::string& metric,
                           const DomainRegistry& registry, const std::vector<std::string>& splits,
                           const std::vector<int64_t>& shots, int64_t n_way,
                           const EvalConfig& eval_cfg, int64_t train_q) {
  torch::NoGradGuard guard;
  TargetSplit ts = split_target(registry);
  auto domain_for = [&](const std::string& name) -> const Domain& {
    if (name == "target") return registry.target_domain;
    if (name == "basic") return ts.basic;
    if (name == "compound") return ts.compound;
    throw ArtifactMismatchError("unknown evaluation split '" + name +
                                "' (target, basic, compound)");
  };
  const int64_t q = eval_cfg.q_queries > 0 ? eval_cfg.q_queries : train_q;

  SuiteReport suite;
  suite.metric = metric;
  suite.n_way = n_way;
  suite.q_queries = q;
  suite.num_tasks = eval_cfg.num_tasks;
  suite.eval_seed = eval_cfg.seed;

  for (const auto& split : splits) {
    const Domain& dom = domain_for(split);
    for (int64_t k : shots) {
      auto report = meta_test(*model.similarity_encoder, suite.metric, model.relation.get(), dom,
                              n_way, k, q, eval_cfg.num_tasks, eval_cfg.seed);
      report.split_name = split;
      suite.evaluations.push_back(std::move(report));
    }
  }

  // Cluster-quality analysis on the similarity encoder's features, capped by
  // strided subsampling (keeps class proportions, deterministic).
  auto capped_db = [&](const Domain& dom) {
    auto feats = encode_domain(*model.similarity_encoder, dom);
    auto labels = dom.labels;
    if (dom.size() > eval_cfg.db_sample_cap) {
      const int64_t stride = (dom.size() + eval_cfg.db_sample_cap - 1) / eval_cfg.db_sample_cap;
      auto idx = torch::arange(0, dom.size(), stride, torch::kInt64);
      feats = feats.index_select(0, idx);
      labels = labels.index_select(0, idx);
    }
    return db_index(feats, labels);
  };
  suite.db_basic = capped_db(ts.basic);
  suite.db_compound = capped_db(ts.compound);
  return suite;
}

namespace {

json suite_to_json(const SuiteReport& s) {
  json j;
  j["schema_version"] = 1;
  j["checkpoint"] = s.checkpoint_path;
  j["config_hash"] = s.config_hash;
  j["metric"] = s.metric;
  j["N"] = s.n_way;
  j["Q"] = s.q_queries;
  j["num_tasks"] = s.num_tasks;
  j["eval_seed"] = s.eval_seed;
  j["evaluations"] = json::array();
  for (const auto& e : s.evaluations) {
    j["evaluations"].push_back({{"split", e.split_name},
                                {"K", e.k_shot},
                                {"mean_accuracy", e.mean_accuracy},
                                {"ci95_halfwidth", e.ci95_halfwidth},
                                {"num_tasks", e.num_tasks},
                                {"per_task_accuracies", e.per_task_accuracies}});
  }
  j["db_index"] = {{"basic", s.db_basic}, {"compound", s.db_compound}};
  return j;
}

void validate_suite_json(const json& j) {
  auto fail = [](const std::string& why) {
    throw ArtifactMismatchError("report schema violation: " + why);
  };
  if (!j.is_object()) fail("root is not an object");
  if (!j.contains("schema_version") || j["schema_version"] != 1) fail("schema_version must be 1");
  for (const char* key : {"checkpoint", "config_hash", "metric"}) {
    if (!j.contains(key) || !j[key].is_string()) fail(std::string(key) + " missing");
  }
  for (const char* key : {"N", "Q", "num_tasks", "eval_seed"}) {
    if (!j.contains(key) || !j[key].is_number()) fail(std::string(key) + " missing");
  }
  if (!j.contains("evaluations") || !j["evaluations"].is_array() || j["evaluations"].empty()) {
    fail("evaluations missing or empty");
  }
  for (const auto& e : j["evaluations"]) {
    for (const char* key : {"split", "K", "mean_accuracy", "ci95_halfwidth", "num_tasks",
                            "per_task_accuracies"}) {
      if (!e.contains(key)) fail(std::string("evaluation entry lacks ") + key);
    }
    const double mean = e["mean_accuracy"].get<double>();
    if (mean < 0.0 || mean > 1.0) fail("mean_accuracy outside [0,1]");
    // The confidence interval must be recomputable from the raw accuracies.
    const auto& per_task = e["per_task_accuracies"];
    if (!per_task.is_array() || per_task.size() != e["num_tasks"].get<size_t>()) {
      fail("per_task_accuracies size does not match num_tasks");
    }
    double m = 0.0;
    for (const auto& a : per_task) m += a.get<double>();
    m /= static_cast<double>(per_task.size());
    double var = 0.0;
    for (const auto& a : per_task) var += (a.get<double>() - m) * (a.get<double>() - m);
    const double sd = per_task.size() > 1 ? std::sqrt(var / (per_task.size() - 1.0)) : 0.0;
    const double ci = 1.96 * sd / std::sqrt(static_cast<double>(per_task.size()));
    if (std::abs(m - mean) > 1e-9 || std::abs(ci - e["ci95_halfwidth"].get<double>()) > 1e-9) {
      fail("mean/CI do not match per-task accuracies");
    }
  }
  if (!j.contains("db_index") || !j["db_index"].is_object()) fail("db_index missing");
}

}  // namespace

void write_report_bundle(const SuiteReport& report, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "report.json");
    if (!out) throw DataError("cannot write report.json under '" + dir + "'");
    out << suite_to_json(report).dump(2) << "\n";
  }
  std::ofstream csv(fs::path(dir) / "report.csv");
  if (!csv) throw DataError("cannot write report.csv under '" + dir + "'");
  csv << "split,K,N,Q,num_tasks,mean_accuracy,ci95_halfwidth,db_index\n";
  char buf[160];
  for (const auto& e : report.evaluations) {
    std::string db;
    if (e.split_name == "basic") db = std::to_string(report.db_basic);
    if (e.split_name == "compound") db = std::to_string(report.db_compound);
    std::snprintf(buf, sizeof(buf), "%s,%lld,%lld,%lld,%lld,%.6f,%.6f,%s\n",
                  e.split_name.c_str(), static_cast<long long>(e.k_shot),
                  static_cast<long long>(e.n_way), static_cast<long long>(e.q_queries),
                  static_cast<long long>(e.num_tasks), e.mean_accuracy, e.ci95_halfwidth,
                  db.c_str());
    csv << buf;
  }
}

SuiteReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ArtifactMismatchError("malformed report JSON '" + path + "': " + e.what());
  }
  validate_suite_json(j);
  SuiteReport s;
  s.checkpoint_path = j["checkpoint"].get<std::string>();
  s.config_hash = j["config_hash"].get<std::string>();
  s.metric = j["metric"].get<std::string>();
  s.n_way = j["N"].get<int64_t>();
  s.q_queries = j["Q"].get<int64_t>();
  s.num_tasks = j["num_tasks"].get<int64_t>();
  s.eval_seed = j["eval_seed"].get<uint64_t>();
  for (const auto& e : j["evaluations"]) {
    EvalReport r;
    r.split_name = e["split"].get<std::string>();
    r.metric = s.metric;
    r.n_way = s.n_way;
    r.k_shot = e["K"].get<int64_t>();
    r.q_queries = s.q_queries;
    r.num_tasks = e["num_tasks"].get<int64_t>();
    r.mean_accuracy = e["mean_accuracy"].get<double>();
    r.ci95_halfwidth = e["ci95_halfwidth"].get<double>();
    r.per_task_accuracies = e["per_task_accuracies"].get<std::vector<double>>();
    s.evaluations.push_back(std::move(r));
  }
  s.db_basic = j["db_index"]["basic"].get<double>();
  s.db_compound = j["db_index"]["compound"].get<double>();
  return s;
}

}  // namespace egsnet
