#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace avd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

/// Dense row-major f32 array with an optional gradient buffer.
///
/// Tensor is a cheap handle: copies share storage. Operations in ops.hpp
/// never write to their inputs; they allocate a fresh result and, when
/// gradient recording is enabled and any input requires a gradient, attach
/// a node to the result so backward() can propagate through it.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<float> data();
  std::span<const float> data() const;
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const float> grad() const;
  /// Gradient buffer, zero-allocated on first access.
  std::span<float> mutable_grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Gradients accumulate (+=) into
  /// every leaf that requires them.
  void backward() const;

  /// Copy of the values with no gradient history.
  Tensor detach() const;
  /// Same as detach().
  Tensor clone() const;

  bool is_leaf() const;
  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const noexcept { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class ComputeGraph;
  friend Tensor record_op(const char*, Shape, std::vector<float>, std::initializer_list<Tensor>,
                          std::function<void(std::span<const float>)>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Backward closure: receives d(loss)/d(output) and accumulates into inputs
/// via Tensor::mutable_grad().
using BackwardFn = std::function<void(std::span<const float> grad_output)>;

/// Creates an op result. If recording is enabled and any input requires a
/// gradient, the result is attached to a new graph node running `backward`.
Tensor record_op(const char* name, Shape shape, std::vector<float> data,
                 std::initializer_list<Tensor> inputs, BackwardFn backward);

bool grad_enabled() noexcept;

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Recorded operations reachable from a root, in topological order
/// (every node after all of its inputs).
class ComputeGraph {
 public:
  static ComputeGraph from_root(const Tensor& root);

  std::size_t size() const noexcept { return order_.size(); }
  /// Operation names in topological order.
  std::vector<std::string> op_names() const;
  /// True when every node's inputs appear before it.
  bool is_topologically_sorted() const;

  /// Visits every node once in reverse topological order, seeding the root
  /// gradient with `seed` (must match the root's element count).
  void backward(std::span<const float> seed) const;

 private:
  std::shared_ptr<detail::TensorImpl> root_;
  std::vector<std::shared_ptr<detail::TensorImpl>> order_;
};

namespace detail {

struct Node {
  const char* name = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

}  // namespace detail

}  // namespace avd
