#pragma once

#include <span>
#include <vector>

#include "avd/tensor.hpp"

namespace avd {

/// Classical (heavy-ball) momentum update on raw buffers:
///   v <- momentum * v + g
///   p <- p - lr * v
void sgd_momentum_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity, float lr,
                       float momentum);

/// Velocity buffers for a fixed list of parameters.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, float momentum);

  /// Applies one update using the accumulated gradients. Parameters that
  /// received no gradient are treated as having a zero gradient.
  void step(float lr);
  void zero_grad();

  float momentum() const noexcept { return momentum_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }
  const std::vector<std::vector<float>>& velocities() const noexcept { return velocities_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> velocities_;
  float momentum_;
};

}  // namespace avd
