#include "avd/optimizer.hpp"

#include <algorithm>

#include "avd/errors.hpp"

namespace avd {

void sgd_momentum_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity, float lr,
                       float momentum) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw DimensionError("sgd_momentum_step: parameter, gradient and velocity lengths differ (" +
                         std::to_string(param.size()) + ", " + std::to_string(grad.size()) + ", " +
                         std::to_string(velocity.size()) + ")");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

SgdMomentum::SgdMomentum(std::vector<Tensor> params, float momentum)
    : params_(std::move(params)), momentum_(momentum) {
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must lie in [0,1)");
  velocities_.reserve(params_.size());
  for (const auto& p : params_) velocities_.emplace_back(p.numel(), 0.0f);
}

void SgdMomentum::step(float lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.has_grad()) {
      sgd_momentum_step(p.data(), p.grad(), velocities_[i], lr, momentum_);
    } else {
      const std::vector<float> zeros(p.numel(), 0.0f);
      sgd_momentum_step(p.data(), zeros, velocities_[i], lr, momentum_);
    }
  }
}

void SgdMomentum::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace avd
