#pragma once

#include "avd/tensor.hpp"

namespace avd {

/// Scores are clamped to [kLogEpsilon, 1 - kLogEpsilon] before taking logs.
inline constexpr float kLogEpsilon = 1e-7f;

/// Mean squared error per element, averaged over the batch. Both arguments
/// must have identical shapes.
Tensor reconstruction_loss(const Tensor& clips, const Tensor& reconstructions);

/// -mean(log real) - mean(log(1 - fake)); the teacher minimizes this.
Tensor teacher_loss(const Tensor& real_scores, const Tensor& fake_scores);

/// Non-saturating encoder objective -mean(log fake).
Tensor generator_loss(const Tensor& fake_scores);

/// lambda * recon + (1 - lambda) * gen; lambda must lie in [0, 1].
Tensor avd_loss(const Tensor& recon, const Tensor& gen, float lambda);

}  // namespace avd
