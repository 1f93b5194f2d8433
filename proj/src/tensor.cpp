#include "avd/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "avd/errors.hpp"

namespace avd {

namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, float fill, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_to_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(float value, bool requires_grad) { return Tensor(Shape{1}, value, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<float> Tensor::data() { return impl_->data; }
std::span<const float> Tensor::data() const { return impl_->data; }

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() requires a single-element tensor, shape " + shape_to_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const float> Tensor::grad() const { return impl_->grad; }

std::span<float> Tensor::mutable_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() requires a scalar root, got shape " + shape_to_string(shape()));
  }
  const float one = 1.0f;
  ComputeGraph::from_root(*this).backward(std::span<const float>(&one, 1));
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const { return detach(); }

bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }

Tensor record_op(const char* name, Shape shape, std::vector<float> data, std::initializer_list<Tensor> inputs,
                 BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!t_grad_enabled) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto node = std::make_shared<detail::Node>();
  node->name = name;
  node->inputs.reserve(inputs.size());
  for (const auto& t : inputs) node->inputs.push_back(t.impl());
  node->backward = std::move(backward);
  out.impl_->requires_grad = true;
  out.impl_->grad_fn = std::move(node);
  return out;
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

ComputeGraph ComputeGraph::from_root(const Tensor& root) {
  ComputeGraph graph;
  graph.root_ = root.impl();
  // Iterative post-order DFS over tensors that carry a grad_fn.
  std::unordered_set<const detail::TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, std::size_t>> stack;
  if (root.impl()->grad_fn) {
    stack.emplace_back(root.impl(), 0);
    visited.insert(root.impl().get());
  }
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->grad_fn->inputs;
    if (next < inputs.size()) {
      auto child = inputs[next++];
      if (child->grad_fn && visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      graph.order_.push_back(impl);
      stack.pop_back();
    }
  }
  return graph;
}

std::vector<std::string> ComputeGraph::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& impl : order_) names.emplace_back(impl->grad_fn->name);
  return names;
}

bool ComputeGraph::is_topologically_sorted() const {
  std::unordered_map<const detail::TensorImpl*, std::size_t> position;
  for (std::size_t i = 0; i < order_.size(); ++i) position[order_[i].get()] = i;
  for (std::size_t i = 0; i < order_.size(); ++i) {
    for (const auto& in : order_[i]->grad_fn->inputs) {
      auto it = position.find(in.get());
      if (it != position.end() && it->second >= i) return false;
    }
  }
  return true;
}

void ComputeGraph::backward(std::span<const float> seed) const {
  if (!root_) return;
  if (seed.size() != root_->data.size()) {
    throw DimensionError("backward seed length " + std::to_string(seed.size()) + " != root numel " +
                         std::to_string(root_->data.size()));
  }
  if (!root_->requires_grad) return;
  if (root_->grad.empty()) root_->grad.assign(root_->data.size(), 0.0f);
  for (std::size_t i = 0; i < seed.size(); ++i) root_->grad[i] += seed[i];

  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& impl = *it;
    if (impl->grad.empty()) continue;
    impl->grad_fn->backward(impl->grad);
    // Interior gradients are consumed exactly once; release them.
    std::vector<float>().swap(impl->grad);
  }
}

}  // namespace avd
