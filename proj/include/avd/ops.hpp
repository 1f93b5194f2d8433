#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "avd/tensor.hpp"

namespace avd {

// Elementwise. The second operand may be a single-element tensor, a tensor of
// identical shape, or a tensor whose shape equals the trailing dims of `a`
// (broadcast over the leading dims, e.g. a row bias).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float value);
Tensor scale(const Tensor& a, float factor);
Tensor square(const Tensor& a);

/// Sum over `axes` (all axes when empty). Reduced axes are dropped; a full
/// reduction yields shape [1]. Accumulation is done in double.
Tensor sum(const Tensor& a, std::span<const std::size_t> axes = {});
Tensor mean(const Tensor& a, std::span<const std::size_t> axes = {});
inline Tensor sum(const Tensor& a, std::initializer_list<std::size_t> axes) {
  return sum(a, std::span<const std::size_t>(axes.begin(), axes.size()));
}
inline Tensor mean(const Tensor& a, std::initializer_list<std::size_t> axes) {
  return mean(a, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Tensor relu(const Tensor& a);
/// `slope` must lie in (0, 1).
Tensor leaky_relu(const Tensor& a, float slope);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

/// [M,K] x [K,P] -> [M,P].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Same data, new shape (element count must match).
Tensor reshape(const Tensor& a, Shape shape);

using Triple = std::array<std::size_t, 3>;

/// Stride/padding per (T, H, W).
struct Conv3dOptions {
  Triple stride{1, 1, 1};
  Triple padding{0, 0, 0};
  Triple output_padding{0, 0, 0};  // transposed convolution only
};

/// Cross-correlation of input [N,Cin,T,H,W] with kernel [Cout,Cin,kT,kH,kW]
/// plus bias [Cout]. Output dims: floor((D + 2p - k) / s) + 1.
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv3dOptions& options = {});

/// Adjoint of conv3d with respect to its input. Kernel is
/// [Cin,Cout,kT,kH,kW]; output dims: (D - 1) * s - 2p + k + output_padding.
Tensor conv3d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        const Conv3dOptions& options = {});

Triple conv3d_output_dims(const Triple& in, const Triple& kernel, const Conv3dOptions& options);
Triple conv3d_transpose_output_dims(const Triple& in, const Triple& kernel, const Conv3dOptions& options);

enum class Mode {
  train,         // batch statistics, running stats updated
  train_frozen,  // batch statistics, running stats left untouched
  eval,          // running statistics
};

/// Running mean/variance for batch normalization (non-trainable).
struct BatchNormStats {
  Tensor mean;
  Tensor var;
};

struct BatchNormOptions {
  float eps = 1e-5f;
  float momentum = 0.1f;  // running <- (1 - momentum) * running + momentum * batch
};

/// Per-channel normalization of [N,C,...] over all non-channel axes.
/// In train modes the batch variance is the biased estimate; the running
/// variance is updated with the unbiased one.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode,
                 const BatchNormOptions& options = {});

/// Mean over the batch of -log softmax(logits)[label]. logits [N,K].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::uint32_t> labels);

}  // namespace avd
