#pragma once

#include <torch/torch.h>

#include <map>
#include <string>
#include <vector>

#include "egsnet/config.hpp"
#include "egsnet/history.hpp"
#include "egsnet/model.hpp"

namespace egsnet {

// Scalar/state metadata carried inside a checkpoint. TRAINING fields (rng
// streams, sampler states, optimizer steps) are consumed only when resuming;
// evaluation needs just the model-identity fields.
struct CheckpointMeta {
  int schema_version = 1;
  std::string stage;  // "joint" | "alternate"
  std::string mode;   // training mode the run was started with
  std::string config_text;
  std::string config_hash;
  bool split = false;

  std::string arch_id;
  std::string metric;
  int64_t embedding_dim = 0;
  int64_t num_classes = 0;
  std::vector<std::string> class_names;

  int64_t epochs_done = 0;       // within the current stage
  int64_t global_step = 0;       // across the whole run
  int64_t alternate_step = 0;    // within the alternate stage
  std::string domain_stream;     // serialized rng states
  std::string episode_stream;
  std::vector<std::string> batch_sampler_states;
  std::map<std::string, int64_t> optimizer_steps;
  std::vector<HistoryRow> history;
};

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::map<std::string, torch::Tensor> tensors;
};

// Versioned binary container (JSON header + raw tensor records) plus a
// `<path>.json` sidecar with the scalar metadata. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, torch::Tensor>>& tensors);
LoadedCheckpoint load_checkpoint(const std::string& path);

// Model parameters and buffers under "sim." / "emo." / "clf." / "rel."
// prefixes, in registration order ("emo." only when split).
std::vector<std::pair<std::string, torch::Tensor>> collect_model_tensors(const ModelState& model);

// Rebuilds a model from a checkpoint's embedded config and copies the stored
// values in; shape or name mismatches raise ArtifactMismatchError.
ModelState restore_model(const LoadedCheckpoint& ckpt);
void load_model_tensors(ModelState& model, const std::map<std::string, torch::Tensor>& tensors);

// SHA-256 of a module's serialized parameters and buffers; used to prove a
// frozen branch did not move.
std::string module_digest(const torch::nn::Module& module);

}  // namespace egsnet
