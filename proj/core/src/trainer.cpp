#include "egsnet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "egsnet/errors.hpp"
#include "egsnet/losses.hpp"
#include "egsnet/metrics.hpp"
#include "egsnet/rng.hpp"

namespace fs = std::filesystem;

namespace egsnet {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "full") return TrainMode::Full;
  if (name == "joint_only") return TrainMode::JointOnly;
  if (name == "alternate_only") return TrainMode::AlternateOnly;
  if (name == "emotion_only") return TrainMode::EmotionOnly;
  if (name == "similarity_only") return TrainMode::SimilarityOnly;
  throw ConfigError("unknown training mode '" + name +
                    "' (full, joint_only, alternate_only, emotion_only, similarity_only)");
}

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Full: return "full";
    case TrainMode::JointOnly: return "joint_only";
    case TrainMode::AlternateOnly: return "alternate_only";
    case TrainMode::EmotionOnly: return "emotion_only";
    case TrainMode::SimilarityOnly: return "similarity_only";
  }
  return "?";
}

Trainer::Trainer(const Config& cfg, const DomainRegistry& registry, TrainMode mode)
    : cfg_(cfg), rc_(RunConfig::from(cfg)), registry_(registry), mode_(mode) {
  init_fresh();
}

Trainer::Trainer(const Config& cfg, const DomainRegistry& registry,
                 const LoadedCheckpoint& resume_from)
    : cfg_(cfg), rc_(RunConfig::from(cfg)), registry_(registry), mode_(TrainMode::Full) {
  restore(resume_from);
}

void Trainer::init_fresh() {
  cfg_.validate();
  model_ = ModelState::make(rc_.encoder, rc_.metric, registry_.num_unified_classes(), rc_.seed);

  const int64_t c_total = registry_.num_unified_classes();
  for (size_t j = 0; j < registry_.source_domains.size(); ++j) {
    const auto& map = registry_.source_to_unified[j];
    auto mask = torch::zeros({c_total}, torch::kBool);
    auto map_t = torch::empty({std::ssize(map)}, torch::kInt64);
    for (size_t l = 0; l < map.size(); ++l) {
      mask[map[l]] = true;
      map_t[static_cast<int64_t>(l)] = map[l];
    }
    present_masks_.push_back(mask);
    unified_maps_.push_back(map_t);
  }

  domain_stream_ = make_stream(rc_.seed, "domain");
  episode_stream_ = make_stream(rc_.seed, "episode");
  for (size_t j = 0; j < registry_.source_domains.size(); ++j) {
    batch_samplers_.emplace_back(&registry_.source_domains[j], rc_.sampler.batch_size,
                                 make_stream(rc_.seed, "batch", j));
  }

  stage_ = (mode_ == TrainMode::AlternateOnly) ? "alternate" : "joint";
  make_stage_optimizers();
}

void Trainer::make_stage_optimizers() {
  const AdamConfig adam{rc_.train.lr, rc_.train.beta1, rc_.train.beta2, rc_.train.adam_eps};
  sim_encoder_opt_ =
      std::make_unique<AdamOptimizer>(model_.similarity_encoder->parameters(), adam);
  emo_encoder_opt_ =
      model_.split ? std::make_unique<AdamOptimizer>(model_.emotion_encoder->parameters(), adam)
                   : nullptr;
  classifier_opt_ = std::make_unique<AdamOptimizer>(model_.classifier->parameters(), adam);
  relation_opt_ =
      model_.relation ? std::make_unique<AdamOptimizer>(model_.relation->parameters(), adam)
                      : nullptr;
}

bool Trainer::emotion_active_in_joint() const {
  if (mode_ == TrainMode::EmotionOnly) return true;
  if (mode_ == TrainMode::SimilarityOnly) return false;
  return rc_.loss.lambda_emo > 0.0;
}

torch::Tensor Trainer::unified_labels(const Batch& batch, int64_t domain_index) const {
  return unified_maps_[static_cast<size_t>(domain_index)].index_select(0, batch.labels);
}

void Trainer::observe(const StepRecord& rec) {
  accum_.total += rec.total;
  ++accum_.steps;
  if (!std::isnan(rec.sim)) {
    accum_.sim += rec.sim;
    ++accum_.sim_steps;
  }
  if (!std::isnan(rec.emo)) {
    accum_.emo += rec.emo;
    ++accum_.emo_steps;
  }
  if (!std::isnan(rec.penalty)) {
    accum_.penalty += rec.penalty;
    accum_.theta += rec.theta;
    ++accum_.penalty_steps;
  }
  if (step_observer) step_observer(rec);
}

void Trainer::flush_period(const std::string& stage, int64_t epoch) {
  if (accum_.steps > 0) {
    HistoryRow row;
    row.epoch = epoch;
    row.stage = stage;
    row.branch = accum_.branch;
    row.total = accum_.total / static_cast<double>(accum_.steps);
    row.sim = accum_.sim_steps ? accum_.sim / accum_.sim_steps : kNaN;
    row.emo = accum_.emo_steps ? accum_.emo / accum_.emo_steps : kNaN;
    row.penalty = accum_.penalty_steps ? accum_.penalty / accum_.penalty_steps : kNaN;
    row.theta = accum_.penalty_steps ? accum_.theta / accum_.penalty_steps : kNaN;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - accum_.started).count();
    history_.push_back(row);
  }
  accum_ = PeriodAccum{};
  accum_.started = std::chrono::steady_clock::now();
}

void Trainer::check_finite(const torch::Tensor& loss, const std::string& out_dir) {
  const double v = loss.item<double>();
  if (std::isfinite(v)) return;
  std::string where;
  if (!out_dir.empty()) {
    where = write_checkpoint(out_dir, "checkpoint_diverged.bin", stage_);
  }
  throw TrainingDiverged("non-finite training loss at step " + std::to_string(global_step_) +
                         (where.empty() ? "" : "; diagnostic checkpoint: " + where));
}

void Trainer::optimizer_step(const std::vector<AdamOptimizer*>& opts) {
  for (auto* o : opts) {
    if (o) o->step();
  }
}

void Trainer::joint_step() {
  const auto& out_dir = out_dir_;
  const int64_t r = select_domain(std::ssize(registry_.source_domains), domain_stream_);
  const Domain& dom = registry_.source_domains[static_cast<size_t>(r)];
  const bool emo_active = emotion_active_in_joint();
  const bool sim_active = mode_ != TrainMode::EmotionOnly;

  for (auto* o : {sim_encoder_opt_.get(), classifier_opt_.get(), relation_opt_.get()}) {
    if (o) o->zero_grad();
  }

  StepRecord rec;
  rec.global_step = global_step_;
  rec.stage = "joint";
  rec.branch = "shared";
  rec.sim = rec.emo = rec.penalty = rec.theta = kNaN;

  torch::Tensor l_sim, l_emo;
  if (sim_active) {
    Episode ep = sample_episode(dom, rc_.sampler.n_way, rc_.sampler.k_shot, rc_.sampler.q_queries,
                                episode_stream_);
    const int64_t nk = ep.support_images.size(0);
    auto feats = model_.similarity_encoder->forward(
        torch::cat({ep.support_images, ep.query_images}), ForwardMode::Train);
    auto scores =
        metric_scores(rc_.metric, model_.relation.get(), feats.narrow(0, 0, nk),
                      ep.support_labels, feats.narrow(0, nk, ep.query_images.size(0)));
    l_sim = similarity_loss(scores, ep.query_labels);
    rec.sim = l_sim.item<double>();
  }
  if (emo_active) {
    Batch batch = batch_samplers_[static_cast<size_t>(r)].next();
    auto labels = unified_labels(batch, r);
    auto feats = model_.emotion_encoder->forward(batch.images, ForwardMode::Train);
    auto logits = model_.classifier->forward(feats);
    l_emo = emotion_loss(logits, labels, present_masks_[static_cast<size_t>(r)]);
    rec.emo = l_emo.item<double>();
  }

  torch::Tensor loss;
  if (sim_active && emo_active) {
    loss = joint_loss(l_sim, l_emo, rc_.loss.lambda_emo);
  } else {
    loss = sim_active ? l_sim : l_emo;
  }
  rec.total = loss.item<double>();
  check_finite(loss, out_dir);
  loss.backward();

  std::vector<AdamOptimizer*> to_step{sim_encoder_opt_.get()};
  if (emo_active) to_step.push_back(classifier_opt_.get());
  if (sim_active && relation_opt_) to_step.push_back(relation_opt_.get());
  optimizer_step(to_step);

  ++global_step_;
  accum_.branch = "shared";
  observe(rec);
}

void Trainer::alternate_step() {
  const auto& out_dir = out_dir_;
  const int64_t n_e_period = rc_.train.period_unit == "steps"
                                 ? rc_.train.period_len
                                 : rc_.train.period_len * rc_.train.episodes_per_epoch;
  const int64_t period = alternate_step_ / n_e_period;
  const int64_t in_period = alternate_step_ % n_e_period;
  const bool emotion_period = (period % 2 == 0);
  const std::string branch = emotion_period ? "emotion" : "similarity";

  // Role exchange: close out the previous period's history chunk.
  if (accum_.steps > 0 && accum_.branch != branch) {
    flush_period("alternate", epochs_done_);
  }

  const int64_t n_e = rc_.loss.theta_counter == "per_period" ? in_period : alternate_step_;
  const double theta = theta_schedule(n_e, rc_.loss);

  const int64_t r = select_domain(std::ssize(registry_.source_domains), domain_stream_);
  const Domain& dom = registry_.source_domains[static_cast<size_t>(r)];
  // The episode stream advances every step regardless of role, so the
  // similarity branch sees the same task sequence whatever the period layout.
  EpisodePlan plan = plan_episode(dom, rc_.sampler.n_way, rc_.sampler.k_shot,
                                  rc_.sampler.q_queries, episode_stream_);

  for (auto* o : {sim_encoder_opt_.get(), emo_encoder_opt_.get(), classifier_opt_.get(),
                  relation_opt_.get()}) {
    if (o) o->zero_grad();
  }

  StepRecord rec;
  rec.global_step = global_step_;
  rec.stage = "alternate";
  rec.branch = branch;
  rec.sim = rec.emo = kNaN;
  rec.theta = theta;

  torch::Tensor loss;
  std::vector<AdamOptimizer*> to_step;
  if (emotion_period) {
    Batch batch = batch_samplers_[static_cast<size_t>(r)].next();
    auto labels = unified_labels(batch, r);
    auto feats = model_.emotion_encoder->forward(batch.images, ForwardMode::Train);
    auto logits = model_.classifier->forward(feats);
    auto l_emo = emotion_loss(logits, labels, present_masks_[static_cast<size_t>(r)]);
    torch::Tensor ref;
    {
      torch::NoGradGuard guard;
      ref = model_.similarity_encoder->forward(batch.images, ForwardMode::FrozenRef);
    }
    auto pen = alignment_penalty(feats, ref);
    loss = emotion_alternate_loss(l_emo, pen, theta);
    rec.emo = l_emo.item<double>();
    rec.penalty = pen.item<double>();
    to_step = {emo_encoder_opt_.get(), classifier_opt_.get()};
    if (rc_.train.update_metric_in_emotion_period) to_step.push_back(relation_opt_.get());
  } else {
    Episode ep = materialize_episode(dom, plan, rc_.sampler.k_shot);
    const int64_t nk = ep.support_images.size(0);
    auto all = torch::cat({ep.support_images, ep.query_images});
    auto feats = model_.similarity_encoder->forward(all, ForwardMode::Train);
    auto scores =
        metric_scores(rc_.metric, model_.relation.get(), feats.narrow(0, 0, nk),
                      ep.support_labels, feats.narrow(0, nk, ep.query_images.size(0)));
    auto l_sim = similarity_loss(scores, ep.query_labels);
    torch::Tensor ref;
    {
      torch::NoGradGuard guard;
      ref = model_.emotion_encoder->forward(all, ForwardMode::FrozenRef);
    }
    auto pen = alignment_penalty(feats, ref);
    loss = similarity_alternate_loss(l_sim, pen, theta);
    rec.sim = l_sim.item<double>();
    rec.penalty = pen.item<double>();
    to_step = {sim_encoder_opt_.get()};
    if (relation_opt_) to_step.push_back(relation_opt_.get());
    if (rc_.train.update_classifier_in_similarity_period) to_step.push_back(classifier_opt_.get());
  }
  rec.total = loss.item<double>();
  check_finite(loss, out_dir);
  loss.backward();
  optimizer_step(to_step);

  ++alternate_step_;
  ++global_step_;
  accum_.branch = branch;
  observe(rec);
}

void Trainer::run_joint_stage(const std::string& out_dir, TrainResult& result) {
  const int64_t target = rc_.train.epochs_joint;
  while (epochs_done_ < target) {
    for (int64_t e = 0; e < rc_.train.episodes_per_epoch; ++e) joint_step();
    ++epochs_done_;
    flush_period("joint", epochs_done_ - 1);
    if (!out_dir.empty() && rc_.train.checkpoint_interval > 0 &&
        epochs_done_ % rc_.train.checkpoint_interval == 0 && epochs_done_ < target) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_joint_epoch_%04d.bin",
                    static_cast<int>(epochs_done_));
      result.checkpoints.push_back(write_checkpoint(out_dir, name, "joint"));
    }
  }
}

void Trainer::run_alternate_stage(const std::string& out_dir, TrainResult& result) {
  const int64_t target = rc_.train.epochs_alternate;
  while (epochs_done_ < target) {
    for (int64_t e = 0; e < rc_.train.episodes_per_epoch; ++e) alternate_step();
    ++epochs_done_;
    flush_period("alternate", epochs_done_ - 1);
    if (!out_dir.empty() && rc_.train.checkpoint_interval > 0 &&
        epochs_done_ % rc_.train.checkpoint_interval == 0 && epochs_done_ < target) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_alternate_epoch_%04d.bin",
                    static_cast<int>(epochs_done_));
      result.checkpoints.push_back(write_checkpoint(out_dir, name, "alternate"));
    }
  }
}

TrainResult Trainer::run(const std::string& out_dir) {
  TrainResult result;
  out_dir_ = out_dir;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  accum_ = PeriodAccum{};
  accum_.started = std::chrono::steady_clock::now();

  if (stage_ == "joint") {
    run_joint_stage(out_dir, result);
    if (mode_ == TrainMode::Full) {
      if (!out_dir.empty()) {
        result.checkpoints.push_back(write_checkpoint(out_dir, "checkpoint_joint.bin", "joint"));
      }
      stage_ = "alternate";
      epochs_done_ = 0;
      alternate_step_ = 0;
      model_.split_shared();
      make_stage_optimizers();
    }
  }
  if (stage_ == "alternate") {
    if (!model_.split) {
      // alternate_only entry from random init
      model_.split_shared();
      make_stage_optimizers();
    }
    run_alternate_stage(out_dir, result);
  }

  if (!out_dir.empty()) {
    result.final_checkpoint = write_checkpoint(out_dir, "checkpoint_final.bin", stage_);
    result.checkpoints.push_back(result.final_checkpoint);
    result.history_path = (fs::path(out_dir) / "history.csv").string();
    write_history_csv(result.history_path, history_);
  }
  return result;
}

CheckpointMeta Trainer::meta_snapshot(const std::string& stage) const {
  CheckpointMeta m;
  m.stage = stage;
  m.mode = train_mode_name(mode_);
  m.config_text = cfg_.canonical_text();
  m.config_hash = cfg_.content_hash();
  m.split = model_.split;
  m.arch_id = model_.similarity_encoder->arch_id();
  m.metric = rc_.metric;
  m.embedding_dim = model_.similarity_encoder->embedding_dim();
  m.num_classes = registry_.num_unified_classes();
  m.class_names = registry_.unified_class_names;
  m.epochs_done = epochs_done_;
  m.global_step = global_step_;
  m.alternate_step = alternate_step_;
  m.domain_stream = rng_state_to_string(domain_stream_);
  m.episode_stream = rng_state_to_string(episode_stream_);
  for (const auto& s : batch_samplers_) m.batch_sampler_states.push_back(s.state_to_string());
  if (sim_encoder_opt_) m.optimizer_steps["enc_sim"] = sim_encoder_opt_->steps();
  if (emo_encoder_opt_) m.optimizer_steps["enc_emo"] = emo_encoder_opt_->steps();
  if (classifier_opt_) m.optimizer_steps["clf"] = classifier_opt_->steps();
  if (relation_opt_) m.optimizer_steps["rel"] = relation_opt_->steps();
  m.history = history_;
  return m;
}

std::string Trainer::write_checkpoint(const std::string& out_dir, const std::string& name,
                                      const std::string& stage) {
  auto tensors = collect_model_tensors(model_);
  auto add_opt = [&](const char* group, AdamOptimizer* opt) {
    if (!opt) return;
    for (size_t i = 0; i < opt->size(); ++i) {
      tensors.emplace_back("opt." + std::string(group) + "." + std::to_string(i) + ".m",
                           opt->moments_m()[i]);
      tensors.emplace_back("opt." + std::string(group) + "." + std::to_string(i) + ".v",
                           opt->moments_v()[i]);
    }
  };
  add_opt("enc_sim", sim_encoder_opt_.get());
  add_opt("enc_emo", emo_encoder_opt_.get());
  add_opt("clf", classifier_opt_.get());
  add_opt("rel", relation_opt_.get());

  const std::string path = (fs::path(out_dir) / name).string();
  save_checkpoint(path, meta_snapshot(stage), tensors);
  return path;
}

void Trainer::restore(const LoadedCheckpoint& ckpt) {
  cfg_.validate();
  if (ckpt.meta.config_hash != cfg_.content_hash()) {
    throw ArtifactMismatchError(
        "checkpoint was produced with a different config (hash " + ckpt.meta.config_hash +
        ", current " + cfg_.content_hash() + "); resume requires the identical config");
  }
  mode_ = parse_train_mode(ckpt.meta.mode);
  if (ckpt.meta.class_names != registry_.unified_class_names) {
    throw ArtifactMismatchError("checkpoint class names do not match the data registry");
  }
  model_ = restore_model(ckpt);

  const int64_t c_total = registry_.num_unified_classes();
  for (size_t j = 0; j < registry_.source_domains.size(); ++j) {
    const auto& map = registry_.source_to_unified[j];
    auto mask = torch::zeros({c_total}, torch::kBool);
    auto map_t = torch::empty({std::ssize(map)}, torch::kInt64);
    for (size_t l = 0; l < map.size(); ++l) {
      mask[map[l]] = true;
      map_t[static_cast<int64_t>(l)] = map[l];
    }
    present_masks_.push_back(mask);
    unified_maps_.push_back(map_t);
  }

  stage_ = ckpt.meta.stage;
  epochs_done_ = ckpt.meta.epochs_done;
  global_step_ = ckpt.meta.global_step;
  alternate_step_ = ckpt.meta.alternate_step;
  domain_stream_ = rng_state_from_string(ckpt.meta.domain_stream);
  episode_stream_ = rng_state_from_string(ckpt.meta.episode_stream);
  if (ckpt.meta.batch_sampler_states.size() != registry_.source_domains.size()) {
    throw ArtifactMismatchError("checkpoint batch-sampler count does not match the registry");
  }
  for (size_t j = 0; j < registry_.source_domains.size(); ++j) {
    batch_samplers_.emplace_back(&registry_.source_domains[j], rc_.sampler.batch_size,
                                 std::mt19937_64{});
    batch_samplers_.back().state_from_string(ckpt.meta.batch_sampler_states[j]);
  }

  make_stage_optimizers();
  auto load_opt = [&](const char* group, AdamOptimizer* opt) {
    if (!opt) return;
    auto it = ckpt.meta.optimizer_steps.find(group);
    if (it == ckpt.meta.optimizer_steps.end()) {
      throw ArtifactMismatchError(std::string("checkpoint lacks optimizer state for '") + group +
                                  "'");
    }
    opt->set_steps(it->second);
    torch::NoGradGuard guard;
    for (size_t i = 0; i < opt->size(); ++i) {
      const std::string base = "opt." + std::string(group) + "." + std::to_string(i);
      auto m = ckpt.tensors.find(base + ".m");
      auto v = ckpt.tensors.find(base + ".v");
      if (m == ckpt.tensors.end() || v == ckpt.tensors.end()) {
        throw ArtifactMismatchError("checkpoint is missing optimizer tensor '" + base + "'");
      }
      opt->moments_m()[i].copy_(m->second);
      opt->moments_v()[i].copy_(v->second);
    }
  };
  load_opt("enc_sim", sim_encoder_opt_.get());
  load_opt("enc_emo", emo_encoder_opt_.get());
  load_opt("clf", classifier_opt_.get());
  load_opt("rel", relation_opt_.get());

  history_ = ckpt.meta.history;
}

TrainResult train(const Config& cfg, const DomainRegistry& registry, TrainMode mode,
                  const std::string& out_dir) {
  Trainer trainer(cfg, registry, mode);
  return trainer.run(out_dir);
}

}  // namespace egsnet
