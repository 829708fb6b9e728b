#include "egsnet/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "egsnet/errors.hpp"
#include "egsnet/tensor_io.hpp"
#include "json.hpp"

using nlohmann::json;

namespace egsnet {

namespace {

constexpr char kMagic[4] = {'E', 'G', 'S', 'N'};
constexpr uint32_t kVersion = 1;

json number_or_null(double v) { return std::isnan(v) ? json() : json(v); }
double null_to_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json meta_to_json(const CheckpointMeta& m) {
  json j;
  j["schema_version"] = m.schema_version;
  j["stage"] = m.stage;
  j["mode"] = m.mode;
  j["config_text"] = m.config_text;
  j["config_hash"] = m.config_hash;
  j["split"] = m.split;
  j["arch_id"] = m.arch_id;
  j["metric"] = m.metric;
  j["embedding_dim"] = m.embedding_dim;
  j["num_classes"] = m.num_classes;
  j["class_names"] = m.class_names;
  j["epochs_done"] = m.epochs_done;
  j["global_step"] = m.global_step;
  j["alternate_step"] = m.alternate_step;
  j["domain_stream"] = m.domain_stream;
  j["episode_stream"] = m.episode_stream;
  j["batch_sampler_states"] = m.batch_sampler_states;
  j["optimizer_steps"] = m.optimizer_steps;
  j["history"] = json::array();
  for (const auto& r : m.history) {
    j["history"].push_back({{"epoch", r.epoch},
                            {"stage", r.stage},
                            {"branch", r.branch},
                            {"total", number_or_null(r.total)},
                            {"sim", number_or_null(r.sim)},
                            {"emo", number_or_null(r.emo)},
                            {"penalty", number_or_null(r.penalty)},
                            {"theta", number_or_null(r.theta)},
                            {"wall_seconds", number_or_null(r.wall_seconds)}});
  }
  return j;
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != 1) {
    throw ArtifactMismatchError("unsupported checkpoint schema version " +
                                std::to_string(m.schema_version));
  }
  m.stage = j.at("stage").get<std::string>();
  m.mode = j.at("mode").get<std::string>();
  m.config_text = j.at("config_text").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.split = j.at("split").get<bool>();
  m.arch_id = j.at("arch_id").get<std::string>();
  m.metric = j.at("metric").get<std::string>();
  m.embedding_dim = j.at("embedding_dim").get<int64_t>();
  m.num_classes = j.at("num_classes").get<int64_t>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.epochs_done = j.at("epochs_done").get<int64_t>();
  m.global_step = j.at("global_step").get<int64_t>();
  m.alternate_step = j.at("alternate_step").get<int64_t>();
  m.domain_stream = j.at("domain_stream").get<std::string>();
  m.episode_stream = j.at("episode_stream").get<std::string>();
  m.batch_sampler_states = j.at("batch_sampler_states").get<std::vector<std::string>>();
  m.optimizer_steps = j.at("optimizer_steps").get<std::map<std::string, int64_t>>();
  for (const auto& r : j.at("history")) {
    HistoryRow row;
    row.epoch = r.at("epoch").get<int64_t>();
    row.stage = r.at("stage").get<std::string>();
    row.branch = r.at("branch").get<std::string>();
    row.total = null_to_nan(r.at("total"));
    row.sim = null_to_nan(r.at("sim"));
    row.emo = null_to_nan(r.at("emo"));
    row.penalty = null_to_nan(r.at("penalty"));
    row.theta = null_to_nan(r.at("theta"));
    row.wall_seconds = null_to_nan(r.at("wall_seconds"));
    m.history.push_back(row);
  }
  return m;
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ArtifactMismatchError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, torch::Tensor>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  const std::string header = meta_to_json(meta).dump();
  write_pod(out, static_cast<uint64_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_pod(out, static_cast<uint64_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    write_pod(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, tensor);
  }
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");

  // Human-readable sidecar with the scalar metadata.
  json side;
  side["schema_version"] = meta.schema_version;
  side["stage"] = meta.stage;
  side["mode"] = meta.mode;
  side["split"] = meta.split;
  side["arch_id"] = meta.arch_id;
  side["metric"] = meta.metric;
  side["embedding_dim"] = meta.embedding_dim;
  side["num_classes"] = meta.num_classes;
  side["epochs_done"] = meta.epochs_done;
  side["global_step"] = meta.global_step;
  side["config_hash"] = meta.config_hash;
  std::ofstream sidecar(path + ".json");
  sidecar << side.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw ArtifactMismatchError("'" + path + "' is not a checkpoint file");
  }
  if (read_pod<uint32_t>(in) != kVersion) {
    throw ArtifactMismatchError("unsupported checkpoint container version in '" + path + "'");
  }
  const auto header_len = read_pod<uint64_t>(in);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw ArtifactMismatchError("truncated checkpoint header");
  LoadedCheckpoint ckpt;
  try {
    ckpt.meta = meta_from_json(json::parse(header));
  } catch (const json::exception& e) {
    throw ArtifactMismatchError(std::string("malformed checkpoint header: ") + e.what());
  }
  const auto count = read_pod<uint64_t>(in);
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw ArtifactMismatchError("truncated checkpoint tensor name");
    ckpt.tensors[name] = read_tensor(in);
  }
  return ckpt;
}

std::vector<std::pair<std::string, torch::Tensor>> collect_model_tensors(const ModelState& model) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add = [&](const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
    for (const auto& b : m.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  };
  add("sim.", *model.similarity_encoder);
  if (model.split) add("emo.", *model.emotion_encoder);
  add("clf.", *model.classifier);
  if (model.relation) add("rel.", *model.relation);
  return out;
}

void load_model_tensors(ModelState& model, const std::map<std::string, torch::Tensor>& tensors) {
  torch::NoGradGuard guard;
  for (auto& [name, dst] : collect_model_tensors(model)) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw ArtifactMismatchError("checkpoint is missing tensor '" + name + "'");
    }
    if (it->second.sizes() != dst.sizes()) {
      throw ArtifactMismatchError("checkpoint tensor '" + name + "' has shape " +
                                  c10::str(it->second.sizes()) + ", model expects " +
                                  c10::str(dst.sizes()));
    }
    dst.copy_(it->second);
  }
}

ModelState restore_model(const LoadedCheckpoint& ckpt) {
  Config cfg = Config::from_text(ckpt.meta.config_text, "<checkpoint>");
  RunConfig rc = RunConfig::from(cfg);
  if (rc.metric != ckpt.meta.metric) {
    throw ArtifactMismatchError("checkpoint metric '" + ckpt.meta.metric +
                                "' disagrees with its embedded config");
  }
  ModelState model = ModelState::make(rc.encoder, rc.metric, ckpt.meta.num_classes, rc.seed);
  if (model.similarity_encoder->embedding_dim() != ckpt.meta.embedding_dim) {
    throw ArtifactMismatchError(
        "checkpoint embedding dim " + std::to_string(ckpt.meta.embedding_dim) +
        " does not match encoder dim " +
        std::to_string(model.similarity_encoder->embedding_dim()));
  }
  if (ckpt.meta.split) model.split_shared();
  load_model_tensors(model, ckpt.tensors);
  return model;
}

std::string module_digest(const torch::nn::Module& module) {
  std::ostringstream buf;
  for (const auto& p : module.named_parameters()) {
    buf << p.key() << ":";
    write_tensor(buf, p.value());
  }
  for (const auto& b : module.named_buffers()) {
    buf << b.key() << ":";
    write_tensor(buf, b.value());
  }
  return sha256_hex(buf.str());
}

}  // namespace egsnet
