#pragma once

#include <torch/torch.h>

#include <random>
#include <string>
#include <vector>

#include "egsnet/datasets.hpp"

namespace egsnet {

// An N-way K-shot task. Labels are remapped to way indices 0..N-1; the
// original domain labels are retained in way_to_domain_label.
struct Episode {
  std::string domain_id;
  torch::Tensor support_images;  // N*K x C x H x W
  torch::Tensor support_labels;  // N*K, way indices
  torch::Tensor query_images;    // N*Q x C x H x W
  torch::Tensor query_labels;    // N*Q, way indices
  std::vector<int64_t> way_to_domain_label;
};

// Index-level episode plan, usable against raw images or cached features.
struct EpisodePlan {
  std::vector<int64_t> way_to_domain_label;        // size N
  std::vector<int64_t> support_indices;            // N*K, into the domain, way-major
  std::vector<int64_t> query_indices;              // N*Q, into the domain, way-major
};

struct Batch {
  std::string domain_id;
  torch::Tensor images;          // B x C x H x W
  torch::Tensor labels;          // B, domain labels
  std::vector<int64_t> indices;  // B, into the domain
};

// Uniform draw over source domains.
int64_t select_domain(int64_t num_domains, std::mt19937_64& rng);
const Domain& select_domain(const DomainRegistry& registry, std::mt19937_64& rng);

// Draws N distinct classes (each needing at least K+Q samples) and K+Q
// distinct samples per class. Classes with fewer samples are excluded; if
// fewer than N remain, throws with counts in the message.
EpisodePlan plan_episode(const Domain& domain, int64_t n_way, int64_t k_shot, int64_t q_query,
                         std::mt19937_64& rng);
Episode materialize_episode(const Domain& domain, const EpisodePlan& plan, int64_t k_shot);
Episode sample_episode(const Domain& domain, int64_t n_way, int64_t k_shot, int64_t q_query,
                       std::mt19937_64& rng);

// Epoch-shuffled mini-batches over one domain: a fresh permutation per pass,
// final short batch kept. State (cursor, permutation, RNG) serializes so a
// resumed run continues the identical batch sequence.
class BatchSampler {
 public:
  BatchSampler(const Domain* domain, int64_t batch_size, std::mt19937_64 rng);

  Batch next();
  int64_t batches_per_epoch() const;

  std::string state_to_string() const;
  void state_from_string(const std::string& text);

 private:
  void reshuffle();

  const Domain* domain_;
  int64_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<int64_t> perm_;
  int64_t cursor_ = 0;
};

}  // namespace egsnet
