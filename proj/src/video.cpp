#include "avd/video.hpp"

#include <algorithm>

#include "avd/errors.hpp"

namespace avd {

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("stack: no tensors given");
  const Shape& inner = items.front().shape();
  const std::size_t n = items.front().numel();
  std::vector<float> data;
  data.reserve(n * items.size());
  for (const auto& t : items) {
    if (t.shape() != inner) {
      throw DimensionError("stack: shape mismatch " + shape_to_string(inner) + " vs " + shape_to_string(t.shape()));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return Tensor(std::move(shape), std::move(data));
}

Tensor unstack(const Tensor& batch, std::size_t index) {
  if (batch.rank() < 2 || index >= batch.dim(0)) {
    throw DimensionError("unstack: index " + std::to_string(index) + " invalid for " + shape_to_string(batch.shape()));
  }
  Shape inner(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = shape_numel(inner);
  auto src = batch.data().subspan(index * n, n);
  return Tensor(std::move(inner), std::vector<float>(src.begin(), src.end()));
}

}  // namespace avd
