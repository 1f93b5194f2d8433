#include "avd/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "avd/errors.hpp"

namespace avd {

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(Tensor(t.shape(), std::vector<float>(t.data().begin(), t.data().end()), true));

  Tensor out = f(leaves);
  if (out.numel() != 1) {
    throw ContractError("grad_check: function must return a scalar, got shape " + shape_to_string(out.shape()));
  }
  out.backward();

  GradCheckReport report;
  report.max_error_per_input.assign(leaves.size(), 0.0);
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto& leaf = leaves[k];
    std::vector<float> analytic(leaf.numel(), 0.0f);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    auto x = leaf.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float original = x[i];
      // Central difference over +-scale*step, divided by the perturbation actually realized in f32.
      auto diff = [&](double scale) {
        const float plus = static_cast<float>(original + scale * options.step);
        const float minus = static_cast<float>(original - scale * options.step);
        x[i] = plus;
        const double f_plus = f(leaves).item();
        x[i] = minus;
        const double f_minus = f(leaves).item();
        x[i] = original;
        return (f_plus - f_minus) / (static_cast<double>(plus) - static_cast<double>(minus));
      };
      const double numeric = options.fourth_order ? (4.0 * diff(1.0) - diff(2.0)) / 3.0 : diff(1.0);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double err = std::abs(a - numeric) / denom;
      report.max_error_per_input[k] = std::max(report.max_error_per_input[k], err);
      ++report.elements_checked;
    }
    report.max_error = std::max(report.max_error, report.max_error_per_input[k]);
  }
  report.passed = report.max_error < options.tolerance;
  return report;
}

}  // namespace avd
