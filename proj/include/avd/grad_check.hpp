#pragma once

#include <functional>
#include <vector>

#include "avd/tensor.hpp"

namespace avd {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  /// Lower bound on the relative-error denominator so near-zero gradients
  /// are compared absolutely: |a - n| / max(|a|, |n|, floor).
  double denominator_floor = 1e-2;
  /// Use the five-point stencil (8[f(x+h) - f(x-h)] - [f(x+2h) - f(x-2h)]) / 12h,
  /// whose O(h^4) truncation error allows a larger step for curved functions.
  bool fourth_order = false;
};

struct GradCheckReport {
  std::vector<double> max_error_per_input;
  double max_error = 0.0;
  std::size_t elements_checked = 0;
  bool passed = false;
};

using ScalarFunction = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of `f` against central differences for
/// every element of every input. The inputs are copied; the caller's
/// tensors are not touched. Throws ContractError if `f` is not scalar.
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace avd
