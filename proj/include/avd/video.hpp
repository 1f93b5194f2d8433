#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avd/tensor.hpp"

namespace avd {

inline constexpr std::size_t kClipFrames = 32;
inline constexpr std::size_t kColorChannels = 3;

/// Fixed-length video volume [3, T, H, W] with values in [0, 1].
struct VideoClip {
  Tensor frames;
  std::optional<std::uint32_t> label;
  std::string source_id;
};

/// Single RGB image [3, H, W] with values in [0, 1].
struct DistilledImage {
  Tensor pixels;
};

/// Stacks equally shaped tensors along a new leading axis (no gradient).
Tensor stack(std::span<const Tensor> items);
/// Slice `index` of the leading axis as a standalone tensor (no gradient).
Tensor unstack(const Tensor& batch, std::size_t index);

}  // namespace avd
