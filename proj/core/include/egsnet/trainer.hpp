#pragma once

#include <torch/torch.h>

#include <chrono>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "egsnet/checkpoint.hpp"
#include "egsnet/config.hpp"
#include "egsnet/datasets.hpp"
#include "egsnet/history.hpp"
#include "egsnet/model.hpp"
#include "egsnet/optim.hpp"
#include "egsnet/sampler.hpp"

namespace egsnet {

// Training modes map to the ablation rows: `full` is the two-stage pipeline,
// `joint_only` stops after stage 1, `alternate_only` runs stage 2 from random
// init, `emotion_only` / `similarity_only` train one branch's objective alone.
enum class TrainMode { Full, JointOnly, AlternateOnly, EmotionOnly, SimilarityOnly };

TrainMode parse_train_mode(const std::string& name);
std::string train_mode_name(TrainMode mode);

// Per-step observation hook for tests and diagnostics. Loss fields that do
// not apply to the step are NaN.
struct StepRecord {
  int64_t global_step = 0;
  std::string stage;
  std::string branch;
  double total = 0.0;
  double sim = 0.0;
  double emo = 0.0;
  double penalty = 0.0;
  double theta = 0.0;
};

struct TrainResult {
  std::string final_checkpoint;
  std::string history_path;
  std::vector<std::string> checkpoints;  // every checkpoint written, final last
};

class Trainer {
 public:
  // Fresh run. The registry must outlive the trainer.
  Trainer(const Config& cfg, const DomainRegistry& registry, TrainMode mode);
  // Continue a saved run; the embedded config must hash-match `cfg`.
  Trainer(const Config& cfg, const DomainRegistry& registry, const LoadedCheckpoint& resume_from);

  // Runs the remaining schedule, writing checkpoints and history under
  // out_dir (created if needed). Empty out_dir = no files (tests).
  TrainResult run(const std::string& out_dir);

  ModelState& model() { return model_; }
  const std::vector<HistoryRow>& history() const { return history_; }
  const RunConfig& run_config() const { return rc_; }

  // Called after every optimizer step.
  std::function<void(const StepRecord&)> step_observer;

 private:
  struct PeriodAccum {
    std::string branch;
    double total = 0, sim = 0, emo = 0, penalty = 0, theta = 0;
    int64_t steps = 0, sim_steps = 0, emo_steps = 0, penalty_steps = 0;
    std::chrono::steady_clock::time_point started;
  };

  void init_fresh();
  void restore(const LoadedCheckpoint& ckpt);
  void make_stage_optimizers();
  bool emotion_active_in_joint() const;

  void joint_step();
  void alternate_step();
  void run_joint_stage(const std::string& out_dir, TrainResult& result);
  void run_alternate_stage(const std::string& out_dir, TrainResult& result);

  torch::Tensor unified_labels(const Batch& batch, int64_t domain_index) const;
  void check_finite(const torch::Tensor& loss, const std::string& out_dir);
  void optimizer_step(const std::vector<AdamOptimizer*>& opts);
  void flush_period(const std::string& stage, int64_t epoch);
  void observe(const StepRecord& rec);

  CheckpointMeta meta_snapshot(const std::string& stage) const;
  std::string write_checkpoint(const std::string& out_dir, const std::string& name,
                               const std::string& stage);

  Config cfg_;
  RunConfig rc_;
  const DomainRegistry& registry_;
  TrainMode mode_;

  ModelState model_;
  std::vector<torch::Tensor> present_masks_;    // per source domain, bool over unified space
  std::vector<torch::Tensor> unified_maps_;     // per source domain, label -> unified label

  std::mt19937_64 domain_stream_, episode_stream_;
  std::vector<BatchSampler> batch_samplers_;

  std::unique_ptr<AdamOptimizer> sim_encoder_opt_, emo_encoder_opt_, classifier_opt_, relation_opt_;

  // Schedule position. stage_ is the stage the next step belongs to.
  std::string stage_ = "joint";
  int64_t epochs_done_ = 0;     // within the current stage
  int64_t global_step_ = 0;
  int64_t alternate_step_ = 0;  // within the alternate stage

  std::vector<HistoryRow> history_;
  PeriodAccum accum_;
  std::string out_dir_;
};

// Convenience wrapper: build the registry's trainer, run every stage, return
// artifact paths.
TrainResult train(const Config& cfg, const DomainRegistry& registry, TrainMode mode,
                  const std::string& out_dir);

}  // namespace egsnet
