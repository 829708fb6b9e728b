#pragma once

#include <torch/torch.h>

#include <vector>

namespace egsnet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update, in place. `t` is the 1-based step count
// after which this update happens; `m`/`v` are the running moment buffers.
void adam_step(torch::Tensor param, const torch::Tensor& grad, torch::Tensor m, torch::Tensor v,
               int64_t t, const AdamConfig& cfg);

// Minimal Adam over an explicit parameter list. Parameters whose grad is
// unset are skipped entirely (no moment decay, no movement), which is what
// the branch-freezing schedule relies on; zero_grad() therefore resets grads
// to "unset" rather than to zero tensors. Moment buffers are allocated
// eagerly so optimizer state serializes uniformly.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<torch::Tensor> params, AdamConfig cfg);

  void step();       // throws TrainingDiverged on non-finite gradients
  void zero_grad();  // set-to-none semantics

  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  size_t size() const { return params_.size(); }
  std::vector<torch::Tensor>& moments_m() { return m_; }
  std::vector<torch::Tensor>& moments_v() { return v_; }

 private:
  std::vector<torch::Tensor> params_, m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace egsnet
