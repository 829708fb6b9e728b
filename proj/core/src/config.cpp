#include "egsnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "egsnet/errors.hpp"
#include "egsnet/tensor_io.hpp"

namespace egsnet {

namespace {

enum class Kind { Int, Double, Bool, String, Choice };

struct SchemaEntry {
  const char* key;
  Kind kind;
  const char* def;
  double min = -std::numeric_limits<double>::infinity();
  double max = std::numeric_limits<double>::infinity();
  std::vector<const char*> choices = {};
  const char* help = "";
};

const std::vector<SchemaEntry>& schema() {
  static const std::vector<SchemaEntry> s = {
      {"seed", Kind::Int, "7", 0, 1e18, {}, "master seed; all rng streams derive from it"},
      {"num_threads", Kind::Int, "1", 1, 4096, {}, "intra-op torch threads"},
      {"data_registry", Kind::String, "", 0, 0, {}, "path to a dumped registry dir; empty = synthetic suite"},
      {"image_side", Kind::Int, "84", 8, 1024, {}, "square image side in pixels"},

      {"synthetic_num_basic_classes", Kind::Int, "7", 2, 64, {}, "basic classes per source domain"},
      {"synthetic_num_compound_classes", Kind::Int, "12", 1, 2016, {}, "compound classes in the target"},
      {"synthetic_num_source_domains", Kind::Int, "3", 1, 64, {}, "number of source domains"},
      {"synthetic_samples_per_class", Kind::Int, "50", 1, 100000, {}, "samples per class per domain"},
      {"synthetic_domain_shift_strength", Kind::Double, "0.8", 0, 100, {}, "per-domain color/brightness shift magnitude"},
      {"synthetic_noise_std", Kind::Double, "0.35", 0, 1e9, {}, "per-sample gaussian pixel noise std"},
      {"synthetic_seed", Kind::Int, "1", 0, 1e18, {}, "seed for the synthetic generator"},

      {"backbone", Kind::Choice, "conv4", 0, 0, {"conv4", "resnet18"}, "encoder backbone"},
      {"encoder_channels", Kind::Int, "64", 1, 2048, {}, "conv4 channel width (= embedding dim)"},
      {"encoder_blocks", Kind::Int, "4", 1, 8, {}, "conv4 block count"},
      {"encoder_stem_stride", Kind::Int, "2", 1, 4, {}, "stride of the first conv"},

      {"metric", Kind::Choice, "prototype", 0, 0, {"prototype", "cosine", "relation"}, "similarity metric module"},

      {"lambda_emo", Kind::Double, "1.0", 0, 1e9, {}, "emotion-branch weight in the joint loss"},
      {"theta0", Kind::Double, "1.0", 0, 1e9, {}, "initial alignment weight in the alternate stage"},
      {"theta_gamma", Kind::Double, "0.5", 1e-9, 1.0, {}, "step-decay factor for theta"},
      {"theta_step", Kind::Int, "100", 1, 1e9, {}, "episodes per theta decay step"},
      {"weight_decay_enabled", Kind::Bool, "true", 0, 0, {}, "false = constant theta0"},
      {"theta_counter", Kind::Choice, "per_period", 0, 0, {"per_period", "global"}, "theta episode counter scope"},

      {"N", Kind::Int, "5", 2, 1024, {}, "ways per episode"},
      {"K", Kind::Int, "5", 1, 1024, {}, "support shots per way"},
      {"Q", Kind::Int, "16", 1, 1024, {}, "query images per way"},
      {"batch_size", Kind::Int, "32", 1, 65536, {}, "emotion-branch mini-batch size"},

      {"epochs_joint", Kind::Int, "200", 0, 1e9, {}, "joint-stage epochs"},
      {"epochs_alternate", Kind::Int, "5", 0, 1e9, {}, "alternate-stage epochs"},
      {"episodes_per_epoch", Kind::Int, "100", 1, 1e9, {}, "training steps per epoch"},
      {"period_len", Kind::Int, "20", 1, 1e9, {}, "role-period length in the alternate stage"},
      {"period_unit", Kind::Choice, "steps", 0, 0, {"steps", "epochs"}, "unit of period_len"},
      {"lr", Kind::Double, "0.001", 0, 100, {}, "adam learning rate"},
      {"beta1", Kind::Double, "0.5", 0, 0.9999999, {}, "adam beta1"},
      {"beta2", Kind::Double, "0.999", 0, 0.9999999, {}, "adam beta2"},
      {"adam_eps", Kind::Double, "1e-8", 0, 1, {}, "adam epsilon"},
      {"checkpoint_interval", Kind::Int, "0", 0, 1e9, {}, "epochs between checkpoints; 0 = stage boundaries only"},
      {"update_classifier_in_similarity_period", Kind::Bool, "false", 0, 0, {}, "unfreeze the classifier during similarity periods"},
      {"update_metric_in_emotion_period", Kind::Bool, "false", 0, 0, {}, "unfreeze relation-metric params during emotion periods"},

      {"eval_num_tasks", Kind::Int, "1000", 1, 1e9, {}, "meta-test tasks per report entry"},
      {"eval_Q", Kind::Int, "0", 0, 1024, {}, "meta-test queries per way; 0 = same as Q"},
      {"db_sample_cap", Kind::Int, "2000", 2, 1e9, {}, "max samples used for the DB index"},
      {"eval_seed", Kind::Int, "12345", 0, 1e18, {}, "base seed for meta-test tasks"},
  };
  return s;
}

const SchemaEntry& entry_for(const std::string& key) {
  for (const auto& e : schema())
    if (key == e.key) return e;
  throw ConfigError("unknown config key: " + key);
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  auto e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

void check_value(const SchemaEntry& e, const std::string& value) {
  const std::string key = e.key;
  switch (e.kind) {
    case Kind::Int: {
      errno = 0;
      char* end = nullptr;
      const long long v = std::strtoll(value.c_str(), &end, 10);
      if (errno != 0 || end == value.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
      if (v < e.min || v > e.max)
        throw ConfigError("config key '" + key + "': value " + value + " out of range");
      break;
    }
    case Kind::Double: {
      errno = 0;
      char* end = nullptr;
      const double v = std::strtod(value.c_str(), &end);
      if (errno != 0 || end == value.c_str() || *end != '\0' || !std::isfinite(v))
        throw ConfigError("config key '" + key + "': not a finite number: '" + value + "'");
      if (v < e.min || v > e.max)
        throw ConfigError("config key '" + key + "': value " + value + " out of range");
      break;
    }
    case Kind::Bool:
      if (value != "true" && value != "false")
        throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
      break;
    case Kind::String:
      break;
    case Kind::Choice: {
      const bool ok = std::any_of(e.choices.begin(), e.choices.end(),
                                  [&](const char* c) { return value == c; });
      if (!ok) {
        std::string opts;
        for (const char* c : e.choices) opts += std::string(opts.empty() ? "" : ", ") + c;
        throw ConfigError("config key '" + key + "': '" + value + "' not one of {" + opts + "}");
      }
      break;
    }
  }
}

}  // namespace

Config::Config() {
  for (const auto& e : schema()) values_[e.key] = e.def;
}

Config Config::from_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path);
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& e = entry_for(key);
  check_value(e, value);
  values_[key] = value;
}

int64_t Config::get_int(const std::string& key) const {
  entry_for(key);
  return std::stoll(values_.at(key));
}

double Config::get_double(const std::string& key) const {
  entry_for(key);
  return std::stod(values_.at(key));
}

bool Config::get_bool(const std::string& key) const {
  entry_for(key);
  return values_.at(key) == "true";
}

const std::string& Config::get_string(const std::string& key) const {
  entry_for(key);
  return values_.at(key);
}

void Config::validate() const {
  for (const auto& [k, v] : values_) check_value(entry_for(k), v);
}

std::string Config::canonical_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

std::string Config::content_hash() const { return sha256_hex(canonical_text()); }

std::string Config::schema_help() {
  std::ostringstream os;
  for (const auto& e : schema()) os << e.key << " (default " << (*e.def ? e.def : "\"\"") << "): " << e.help << "\n";
  return os.str();
}

RunConfig RunConfig::from(const Config& cfg) {
  cfg.validate();
  RunConfig r;
  r.seed = static_cast<uint64_t>(cfg.get_int("seed"));
  r.num_threads = cfg.get_int("num_threads");
  r.data_registry = cfg.get_string("data_registry");
  r.image_side = cfg.get_int("image_side");
  r.metric = cfg.get_string("metric");

  r.synthetic.num_basic_classes = cfg.get_int("synthetic_num_basic_classes");
  r.synthetic.num_compound_classes = cfg.get_int("synthetic_num_compound_classes");
  r.synthetic.num_source_domains = cfg.get_int("synthetic_num_source_domains");
  r.synthetic.image_side = r.image_side;
  r.synthetic.samples_per_class = cfg.get_int("synthetic_samples_per_class");
  r.synthetic.domain_shift_strength = cfg.get_double("synthetic_domain_shift_strength");
  r.synthetic.noise_std = cfg.get_double("synthetic_noise_std");
  r.synthetic.seed = static_cast<uint64_t>(cfg.get_int("synthetic_seed"));

  r.encoder.backbone = cfg.get_string("backbone");
  r.encoder.channels = cfg.get_int("encoder_channels");
  r.encoder.blocks = cfg.get_int("encoder_blocks");
  r.encoder.stem_stride = cfg.get_int("encoder_stem_stride");

  r.loss.lambda_emo = cfg.get_double("lambda_emo");
  r.loss.theta0 = cfg.get_double("theta0");
  r.loss.theta_gamma = cfg.get_double("theta_gamma");
  r.loss.theta_step = cfg.get_int("theta_step");
  r.loss.weight_decay_enabled = cfg.get_bool("weight_decay_enabled");
  r.loss.theta_counter = cfg.get_string("theta_counter");

  r.sampler.n_way = cfg.get_int("N");
  r.sampler.k_shot = cfg.get_int("K");
  r.sampler.q_queries = cfg.get_int("Q");
  r.sampler.batch_size = cfg.get_int("batch_size");

  r.train.epochs_joint = cfg.get_int("epochs_joint");
  r.train.epochs_alternate = cfg.get_int("epochs_alternate");
  r.train.episodes_per_epoch = cfg.get_int("episodes_per_epoch");
  r.train.period_len = cfg.get_int("period_len");
  r.train.period_unit = cfg.get_string("period_unit");
  r.train.lr = cfg.get_double("lr");
  r.train.beta1 = cfg.get_double("beta1");
  r.train.beta2 = cfg.get_double("beta2");
  r.train.adam_eps = cfg.get_double("adam_eps");
  r.train.checkpoint_interval = cfg.get_int("checkpoint_interval");
  r.train.update_classifier_in_similarity_period = cfg.get_bool("update_classifier_in_similarity_period");
  r.train.update_metric_in_emotion_period = cfg.get_bool("update_metric_in_emotion_period");

  r.eval.num_tasks = cfg.get_int("eval_num_tasks");
  r.eval.q_queries = cfg.get_int("eval_Q");
  r.eval.db_sample_cap = cfg.get_int("db_sample_cap");
  r.eval.seed = static_cast<uint64_t>(cfg.get_int("eval_seed"));
  return r;
}

}  // namespace egsnet
