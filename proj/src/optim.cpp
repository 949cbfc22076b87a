#include "tripletlens/optim.hpp"

#include "tripletlens/error.hpp"

namespace tl {

void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw DimensionError("sgd_momentum_step: buffer sizes differ (" +
                         std::to_string(params.size()) + ", " + std::to_string(grads.size()) +
                         ", " + std::to_string(velocity.size()) + ")");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

SgdMomentum::SgdMomentum(std::vector<Tensor*> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  velocity_.reserve(params_.size());
  for (Tensor* p : params_) velocity_.emplace_back(p->numel(), 0.0);
}

void SgdMomentum::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    sgd_momentum_step(p.data(), p.ensure_grad(), velocity_[i], lr_, momentum_);
  }
}

void SgdMomentum::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

}  // namespace tl
