#include "egsnet/sampler.hpp"

#include <algorithm>
#include <sstream>

#include "egsnet/errors.hpp"

namespace egsnet {

namespace {

// First n entries of a Fisher-Yates pass; draw count is n regardless of pool
// size, keeping the RNG stream consumption predictable.
std::vector<int64_t> draw_without_replacement(std::vector<int64_t> pool, int64_t n,
                                              std::mt19937_64& rng) {
  for (int64_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<int64_t> pick(i, std::ssize(pool) - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n);
  return pool;
}

}  // namespace

int64_t select_domain(int64_t num_domains, std::mt19937_64& rng) {
  if (num_domains < 1) throw DataError("no domains to select from");
  return std::uniform_int_distribution<int64_t>(0, num_domains - 1)(rng);
}

const Domain& select_domain(const DomainRegistry& registry, std::mt19937_64& rng) {
  return registry.source_domains[static_cast<size_t>(
      select_domain(std::ssize(registry.source_domains), rng))];
}

EpisodePlan plan_episode(const Domain& domain, int64_t n_way, int64_t k_shot, int64_t q_query,
                         std::mt19937_64& rng) {
  const int64_t need = k_shot + q_query;
  std::vector<int64_t> eligible;
  for (int64_t c = 0; c < domain.num_classes(); ++c) {
    if (std::ssize(domain.class_indices[static_cast<size_t>(c)]) >= need) eligible.push_back(c);
  }
  if (std::ssize(eligible) < n_way) {
    throw DataError("domain '" + domain.id + "': only " + std::to_string(eligible.size()) +
                    " of " + std::to_string(domain.num_classes()) + " classes have the " +
                    std::to_string(need) + " samples needed per way; " + std::to_string(n_way) +
                    " ways requested");
  }
  EpisodePlan plan;
  plan.way_to_domain_label = draw_without_replacement(eligible, n_way, rng);
  for (int64_t w = 0; w < n_way; ++w) {
    auto picks = draw_without_replacement(
        domain.class_indices[static_cast<size_t>(plan.way_to_domain_label[w])], need, rng);
    plan.support_indices.insert(plan.support_indices.end(), picks.begin(), picks.begin() + k_shot);
    plan.query_indices.insert(plan.query_indices.end(), picks.begin() + k_shot, picks.end());
  }
  return plan;
}

Episode materialize_episode(const Domain& domain, const EpisodePlan& plan, int64_t k_shot) {
  const int64_t n_way = std::ssize(plan.way_to_domain_label);
  const int64_t q_query = std::ssize(plan.query_indices) / n_way;
  Episode ep;
  ep.domain_id = domain.id;
  ep.way_to_domain_label = plan.way_to_domain_label;
  ep.support_images =
      domain.images.index_select(0, torch::tensor(plan.support_indices, torch::kInt64));
  ep.query_images =
      domain.images.index_select(0, torch::tensor(plan.query_indices, torch::kInt64));
  ep.support_labels = torch::arange(n_way, torch::kInt64).repeat_interleave(k_shot);
  ep.query_labels = torch::arange(n_way, torch::kInt64).repeat_interleave(q_query);
  return ep;
}

Episode sample_episode(const Domain& domain, int64_t n_way, int64_t k_shot, int64_t q_query,
                       std::mt19937_64& rng) {
  return materialize_episode(domain, plan_episode(domain, n_way, k_shot, q_query, rng), k_shot);
}

BatchSampler::BatchSampler(const Domain* domain, int64_t batch_size, std::mt19937_64 rng)
    : domain_(domain), batch_size_(batch_size), rng_(std::move(rng)) {
  if (batch_size_ < 1) throw ConfigError("batch_size must be at least 1");
  reshuffle();
}

void BatchSampler::reshuffle() {
  perm_.resize(domain_->size());
  std::iota(perm_.begin(), perm_.end(), 0);
  for (int64_t i = 0; i < std::ssize(perm_) - 1; ++i) {
    std::uniform_int_distribution<int64_t> pick(i, std::ssize(perm_) - 1);
    std::swap(perm_[i], perm_[pick(rng_)]);
  }
  cursor_ = 0;
}

Batch BatchSampler::next() {
  if (cursor_ >= std::ssize(perm_)) reshuffle();
  const int64_t take = std::min(batch_size_, std::ssize(perm_) - cursor_);
  std::vector<int64_t> indices(perm_.begin() + cursor_, perm_.begin() + cursor_ + take);
  cursor_ += take;
  Batch b;
  b.domain_id = domain_->id;
  auto idx = torch::tensor(indices, torch::kInt64);
  b.images = domain_->images.index_select(0, idx);
  b.labels = domain_->labels.index_select(0, idx);
  b.indices = std::move(indices);
  return b;
}

int64_t BatchSampler::batches_per_epoch() const {
  return (domain_->size() + batch_size_ - 1) / batch_size_;
}

std::string BatchSampler::state_to_string() const {
  std::ostringstream out;
  out << batch_size_ << " " << cursor_ << " " << perm_.size();
  for (int64_t p : perm_) out << " " << p;
  out << " " << rng_;
  return out.str();
}

void BatchSampler::state_from_string(const std::string& text) {
  std::istringstream in(text);
  int64_t batch_size = 0;
  size_t n = 0;
  in >> batch_size >> cursor_ >> n;
  if (!in || batch_size != batch_size_) {
    throw ArtifactMismatchError("batch sampler state was saved with batch size " +
                                std::to_string(batch_size) + ", expected " +
                                std::to_string(batch_size_));
  }
  if (n != static_cast<size_t>(domain_->size())) {
    throw ArtifactMismatchError("batch sampler state does not match domain '" + domain_->id +
                                "' (" + std::to_string(domain_->size()) + " samples)");
  }
  perm_.resize(n);
  for (auto& p : perm_) in >> p;
  in >> rng_;
  if (!in) throw ArtifactMismatchError("truncated batch sampler state");
}

}  // namespace egsnet
