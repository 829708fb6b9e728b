#include "egsnet/optim.hpp"

#include <cmath>

#include "egsnet/errors.hpp"

namespace egsnet {

void adam_step(torch::Tensor param, const torch::Tensor& grad, torch::Tensor m, torch::Tensor v,
               int64_t t, const AdamConfig& cfg) {
  torch::NoGradGuard guard;
  m.mul_(cfg.beta1).add_(grad, 1.0 - cfg.beta1);
  v.mul_(cfg.beta2).addcmul_(grad, grad, 1.0 - cfg.beta2);
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  auto denom = (v.sqrt() / std::sqrt(bias2)).add_(cfg.eps);
  param.addcdiv_(m, denom, -cfg.lr / bias1);
}

AdamOptimizer::AdamOptimizer(std::vector<torch::Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  torch::NoGradGuard guard;
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void AdamOptimizer::step() {
  ++t_;
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& grad = params_[i].grad();
    if (!grad.defined()) continue;
    if (!grad.isfinite().all().item<bool>()) {
      throw TrainingDiverged("non-finite gradient in parameter " + std::to_string(i) +
                             " at optimizer step " + std::to_string(t_));
    }
    adam_step(params_[i], grad, m_[i], v_[i], t_, cfg_);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) {
    p.mutable_grad().reset();
  }
}

}  // namespace egsnet
