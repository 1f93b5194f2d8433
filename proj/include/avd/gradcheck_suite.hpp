#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace avd {

struct GradCheckSuiteOptions {
  std::size_t instances = 20;  // random instances per op
  double tolerance = 1e-3;
  std::uint64_t seed = 0;
};

struct OpCheckResult {
  std::string op;
  std::size_t instances = 0;
  std::size_t elements = 0;
  double max_error = 0.0;
  bool passed = false;
};

/// Names of every differentiable op covered by the suite, in report order.
std::vector<std::string> gradcheck_ops();

/// Central-difference checks of every differentiable op on random small
/// instances. Each op appears exactly once in the result.
std::vector<OpCheckResult> run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

}  // namespace avd
