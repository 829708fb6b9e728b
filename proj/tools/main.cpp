// egsnet: dataset synthesis, training, evaluation, and report comparison.
//
// Exit codes: 0 success, 2 config error, 3 artifact mismatch, 1 runtime
// failure. Every command is deterministic given (config, seed, data).

#include <torch/torch.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "egsnet/checkpoint.hpp"
#include "egsnet/config.hpp"
#include "egsnet/datasets.hpp"
#include "egsnet/errors.hpp"
#include "egsnet/evaluator.hpp"
#include "egsnet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso8601() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path output_root() {
  if (const char* env = std::getenv("EGSNET_OUTPUT_ROOT")) return fs::path(env);
  return fs::path("runs");
}

egsnet::Config load_config(const std::string& path, const std::vector<std::string>& sets) {
  egsnet::Config cfg = path.empty() ? egsnet::Config() : egsnet::Config::from_file(path);
  for (const auto& s : sets) cfg.set(s);
  cfg.validate();
  return cfg;
}

egsnet::DomainRegistry build_registry(const egsnet::RunConfig& rc) {
  if (!rc.data_registry.empty()) return egsnet::load_registry(rc.data_registry, rc.image_side);
  return egsnet::generate_synthetic_suite(rc.synthetic);
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int64_t> parse_shots(const std::string& csv) {
  std::vector<int64_t> shots;
  for (const auto& s : split_csv(csv)) {
    try {
      shots.push_back(std::stoll(s));
    } catch (const std::exception&) {
      throw egsnet::ConfigError("--shots: not an integer: '" + s + "'");
    }
    if (shots.back() < 1) throw egsnet::ConfigError("--shots: must be >= 1, got " + s);
  }
  if (shots.empty()) throw egsnet::ConfigError("--shots: empty list");
  return shots;
}

int cmd_synth(const std::string& config_path, const std::vector<std::string>& sets,
              std::string out) {
  egsnet::Config cfg = load_config(config_path, sets);
  egsnet::RunConfig rc = egsnet::RunConfig::from(cfg);
  torch::set_num_threads(static_cast<int>(rc.num_threads));
  if (out.empty()) out = (output_root() / ("synth-" + cfg.content_hash().substr(0, 8))).string();

  egsnet::DomainRegistry registry = egsnet::generate_synthetic_suite(rc.synthetic);
  egsnet::dump_registry(registry, out);
  std::cout << "wrote " << registry.source_domains.size() << " source domains + target to " << out
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& mode_name, std::string out, const std::string& resume) {
  egsnet::Config cfg = load_config(config_path, sets);
  egsnet::RunConfig rc = egsnet::RunConfig::from(cfg);
  torch::set_num_threads(static_cast<int>(rc.num_threads));

  egsnet::TrainMode mode = egsnet::parse_train_mode(mode_name);
  if (out.empty()) {
    out = (output_root() / (egsnet::train_mode_name(mode) + "-seed" + std::to_string(rc.seed) +
                            "-" + cfg.content_hash().substr(0, 8)))
              .string();
  }

  egsnet::DomainRegistry registry = build_registry(rc);
  const std::string started = now_iso8601();

  egsnet::TrainResult result = [&] {
    if (!resume.empty()) {
      egsnet::LoadedCheckpoint ckpt = egsnet::load_checkpoint(resume);
      egsnet::Trainer trainer(cfg, registry, ckpt);
      return trainer.run(out);
    }
    egsnet::Trainer trainer(cfg, registry, mode);
    return trainer.run(out);
  }();

  json manifest;
  manifest["schema_version"] = 1;
  manifest["run_id"] = fs::path(out).filename().string();
  manifest["mode"] = mode_name;
  manifest["config"] = cfg.canonical_text();
  manifest["config_hash"] = cfg.content_hash();
  manifest["started_at"] = started;
  manifest["finished_at"] = now_iso8601();
  manifest["artifacts"]["checkpoints"] = result.checkpoints;
  manifest["artifacts"]["final_checkpoint"] = result.final_checkpoint;
  manifest["artifacts"]["history"] = result.history_path;

  for (const auto& p : result.checkpoints)
    if (!fs::exists(p)) throw std::runtime_error("missing artifact at run end: " + p);
  if (!fs::exists(result.history_path))
    throw std::runtime_error("missing artifact at run end: " + result.history_path);

  const fs::path manifest_path = fs::path(out) / "run_manifest.json";
  std::ofstream mf(manifest_path);
  mf << manifest.dump(2) << "\n";
  if (!mf) throw std::runtime_error("cannot write " + manifest_path.string());

  std::cout << "final checkpoint: " << result.final_checkpoint << "\n"
            << "manifest: " << manifest_path.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::vector<std::string>& sets,
             const std::string& data, const std::string& splits_csv, const std::string& shots_csv,
             std::string out) {
  egsnet::LoadedCheckpoint ckpt = egsnet::load_checkpoint(checkpoint_path);
  egsnet::Config cfg = egsnet::Config::from_text(ckpt.meta.config_text, "<checkpoint>");
  for (const auto& s : sets) cfg.set(s);
  if (!data.empty()) cfg.set("data_registry", data);
  cfg.validate();
  egsnet::RunConfig rc = egsnet::RunConfig::from(cfg);
  torch::set_num_threads(static_cast<int>(rc.num_threads));

  egsnet::ModelState model = egsnet::restore_model(ckpt);
  egsnet::DomainRegistry registry = build_registry(rc);

  const std::vector<std::string> splits = split_csv(splits_csv);
  if (splits.empty()) throw egsnet::ConfigError("--splits: empty list");
  const std::vector<int64_t> shots = parse_shots(shots_csv);

  egsnet::SuiteReport suite =
      egsnet::evaluate_suite(model, rc.metric, registry, splits, shots, rc.sampler.n_way, rc.eval,
                             rc.sampler.q_queries);
  suite.checkpoint_path = checkpoint_path;
  suite.config_hash = ckpt.meta.config_hash;

  if (out.empty()) {
    out = (output_root() / ("eval-" + fs::path(checkpoint_path).stem().string() + "-" +
                            ckpt.meta.config_hash.substr(0, 8)))
              .string();
  }
  egsnet::write_report_bundle(suite, out);

  for (const auto& ev : suite.evaluations) {
    std::cout << ev.split_name << " " << ev.k_shot << "-shot: " << ev.mean_accuracy << " +/- "
              << ev.ci95_halfwidth << "\n";
  }
  std::cout << "report bundle: " << out << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& bundles, const std::string& out) {
  std::vector<egsnet::SuiteReport> reports;
  reports.reserve(bundles.size());
  for (const auto& dir : bundles) {
    fs::path p(dir);
    if (fs::is_directory(p)) p /= "report.json";
    reports.push_back(egsnet::read_report_json(p.string()));
  }

  // Column set = (split, K) pairs of the first bundle; all bundles must match.
  std::vector<std::pair<std::string, int64_t>> columns;
  for (const auto& ev : reports.front().evaluations)
    columns.emplace_back(ev.split_name, ev.k_shot);
  for (size_t i = 1; i < reports.size(); ++i) {
    std::vector<std::pair<std::string, int64_t>> cols;
    for (const auto& ev : reports[i].evaluations) cols.emplace_back(ev.split_name, ev.k_shot);
    if (cols != columns) {
      throw egsnet::ArtifactMismatchError("bundle '" + bundles[i] +
                                          "' evaluates a different split/shot set than '" +
                                          bundles.front() + "'");
    }
  }

  std::ostringstream csv;
  csv << "run";
  for (const auto& [split, k] : columns)
    csv << "," << split << "_" << k << "shot_mean," << split << "_" << k << "shot_ci95";
  csv << "\n";
  for (size_t i = 0; i < reports.size(); ++i) {
    csv << fs::path(bundles[i]).filename().string();
    char buf[64];
    for (const auto& ev : reports[i].evaluations) {
      std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", ev.mean_accuracy, ev.ci95_halfwidth);
      csv << buf;
    }
    csv << "\n";
  }

  if (out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(out);
    f << csv.str();
    if (!f) throw std::runtime_error("cannot write " + out);
    std::cout << "comparison: " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"emotion-guided similarity network: train and evaluate few-shot runs"};
  app.require_subcommand(1);

  std::string config_path, mode = "full", out, resume, checkpoint, data;
  std::string splits_csv = "basic,compound", shots_csv = "5";
  std::vector<std::string> sets, bundles;

  auto* synth = app.add_subcommand("synth", "generate the procedural benchmark suite to disk");
  synth->add_option("--config", config_path, "config file (flat key = value lines)");
  synth->add_option("--set", sets, "override, key=value; repeatable");
  synth->add_option("--out", out, "output directory (default under EGSNET_OUTPUT_ROOT or ./runs)");

  auto* train = app.add_subcommand("train", "train a model per the configured schedule");
  train->add_option("--config", config_path, "config file (flat key = value lines)");
  train->add_option("--set", sets, "override, key=value; repeatable");
  train->add_option("--mode", mode,
                    "full | joint_only | alternate_only | emotion_only | similarity_only");
  train->add_option("--out", out, "run directory (default under EGSNET_OUTPUT_ROOT or ./runs)");
  train->add_option("--resume", resume, "checkpoint to continue from (config must hash-match)");

  auto* eval = app.add_subcommand("eval", "meta-test a checkpoint and write a report bundle");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--set", sets, "override on the checkpoint's embedded config; repeatable");
  eval->add_option("--data", data, "registry directory (default: checkpoint's data source)");
  eval->add_option("--splits", splits_csv, "comma list of target | basic | compound");
  eval->add_option("--shots", shots_csv, "comma list of K values, e.g. 1,5");
  eval->add_option("--out", out, "bundle directory (default under EGSNET_OUTPUT_ROOT or ./runs)");

  auto* compare = app.add_subcommand("compare", "align >= 2 report bundles into one CSV table");
  compare->add_option("bundles", bundles, "report bundle directories or report.json paths")
      ->expected(2, -1);
  compare->add_option("--out", out, "CSV path (default: stdout)");

  auto* schema = app.add_subcommand("schema", "print every config key, default, and meaning");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are config errors
  }

  try {
    if (*synth) return cmd_synth(config_path, sets, out);
    if (*train) return cmd_train(config_path, sets, mode, out, resume);
    if (*eval) return cmd_eval(checkpoint, sets, data, splits_csv, shots_csv, out);
    if (*compare) return cmd_compare(bundles, out);
    if (*schema) {
      std::cout << egsnet::Config::schema_help();
      return 0;
    }
  } catch (const egsnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const egsnet::ArtifactMismatchError& e) {
    std::cerr << "artifact mismatch: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
