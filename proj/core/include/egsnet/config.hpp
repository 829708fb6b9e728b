#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace egsnet {

// Flat key=value run configuration. Every key has a typed schema entry with a
// default; unknown keys and malformed values raise ConfigError naming the key.
class Config {
 public:
  Config();  // all defaults

  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text, const std::string& origin = "<inline>");
  // "key=value" override, e.g. from a --set flag.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  // Re-checks every value against its schema (ranges, choice sets).
  void validate() const;

  // Sorted "key = value" lines of the effective config, defaults included.
  std::string canonical_text() const;
  std::string content_hash() const;  // sha256 of canonical_text()

  const std::map<std::string, std::string>& values() const { return values_; }

  static std::string schema_help();

 private:
  std::map<std::string, std::string> values_;
};

struct SyntheticConfig {
  int64_t num_basic_classes = 7;
  int64_t num_compound_classes = 12;
  int64_t num_source_domains = 3;
  int64_t image_side = 84;
  int64_t samples_per_class = 50;
  double domain_shift_strength = 0.8;
  double noise_std = 0.35;
  uint64_t seed = 1;
};

struct EncoderConfig {
  std::string backbone = "conv4";  // conv4 | resnet18
  int64_t channels = 64;
  int64_t blocks = 4;
  int64_t stem_stride = 2;
};

struct LossConfig {
  double lambda_emo = 1.0;
  double theta0 = 1.0;
  double theta_gamma = 0.5;
  int64_t theta_step = 100;
  bool weight_decay_enabled = true;
  std::string theta_counter = "per_period";  // per_period | global
};

struct TrainConfig {
  int64_t epochs_joint = 200;
  int64_t epochs_alternate = 5;
  int64_t episodes_per_epoch = 100;
  int64_t period_len = 20;
  std::string period_unit = "steps";  // steps | epochs
  double lr = 0.001;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t checkpoint_interval = 0;  // epochs; 0 = stage boundaries only
  bool update_classifier_in_similarity_period = false;
  bool update_metric_in_emotion_period = false;
};

struct SamplerConfig {
  int64_t n_way = 5;
  int64_t k_shot = 5;
  int64_t q_queries = 16;
  int64_t batch_size = 32;
};

struct EvalConfig {
  int64_t num_tasks = 1000;
  int64_t q_queries = 0;  // 0 = same as training Q
  int64_t db_sample_cap = 2000;
  uint64_t seed = 12345;
};

// Typed view over a validated Config.
struct RunConfig {
  uint64_t seed = 7;
  int64_t num_threads = 1;
  std::string data_registry;  // empty = generate the synthetic suite
  int64_t image_side = 84;
  std::string metric = "prototype";  // prototype | cosine | relation
  SyntheticConfig synthetic;
  EncoderConfig encoder;
  LossConfig loss;
  TrainConfig train;
  SamplerConfig sampler;
  EvalConfig eval;

  static RunConfig from(const Config& cfg);
};

}  // namespace egsnet
