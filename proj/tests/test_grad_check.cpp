#include <gtest/gtest.h>

#include <random>

#include "avd/errors.hpp"
#include "avd/grad_check.hpp"
#include "avd/gradcheck_suite.hpp"
#include "avd/ops.hpp"
#include "support.hpp"

using namespace avd;

namespace {

// x -> 3x with a backward that reports -3 for one chosen element.
Tensor corrupted_triple(const Tensor& x, std::size_t bad_index) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= 3.0f;
  return record_op("corrupted_triple", x.shape(), std::move(out), {x}, [x, bad_index](std::span<const float> g) {
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += (i == bad_index ? -3.0f : 3.0f) * g[i];
  });
}

}  // namespace

TEST(GradCheck, SumHasExactUnitGradient) {
  // Dyadic inputs and step keep every f32 sum exact, so the comparison is too.
  Tensor x({3, 4});
  for (std::size_t i = 0; i < 12; ++i) x.data()[i] = static_cast<float>(i) * 0.125f - 0.5f;
  GradCheckOptions o;
  o.step = 0.25;
  auto r = grad_check([](const std::vector<Tensor>& in) { return sum(in[0]); }, {x}, o);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.elements_checked, 12u);
  EXPECT_EQ(r.max_error, 0.0);
}

TEST(GradCheck, SignFlipIsReported) {
  std::mt19937_64 rng(2);
  Tensor x = testkit::random_tensor({5}, rng);
  auto r = grad_check([](const std::vector<Tensor>& in) { return sum(corrupted_triple(in[0], 2)); }, {x});
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_error, 2.0, 1e-3);  // |3 - (-3)| / 3
}

TEST(GradCheck, NonScalarFunctionIsContractError) {
  EXPECT_THROW(grad_check([](const std::vector<Tensor>& in) { return scale(in[0], 2.0f); }, {Tensor({3}, 1.0f)}),
               ContractError);
}

TEST(GradCheck, CallerInputsUntouched) {
  Tensor x({2}, std::vector<float>{0.5f, -0.5f});
  grad_check([](const std::vector<Tensor>& in) { return sum(square(in[0])); }, {x});
  EXPECT_EQ(x.data()[0], 0.5f);
  EXPECT_EQ(x.data()[1], -0.5f);
  EXPECT_FALSE(x.has_grad());
}

TEST(GradCheck, FourthOrderStencilBeatsCentralOnCurvedFunction) {
  Tensor x({1}, std::vector<float>{0.7f});
  GradCheckOptions o;
  o.step = 0.1;
  o.tolerance = 1.0;
  auto f = [](const std::vector<Tensor>& in) { return sum(tanh(scale(in[0], 3.0f))); };
  const double central = grad_check(f, {x}, o).max_error;
  o.fourth_order = true;
  const double fourth = grad_check(f, {x}, o).max_error;
  EXPECT_LT(fourth, central);
}

TEST(GradCheckSuite, EveryOpListedOncePasses) {
  GradCheckSuiteOptions o;
  o.instances = 3;
  auto results = run_gradcheck_suite(o);
  auto names = gradcheck_ops();
  ASSERT_EQ(results.size(), names.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    EXPECT_EQ(results[i].op, names[i]);
    EXPECT_EQ(results[i].instances, 3u);
    EXPECT_TRUE(results[i].passed) << results[i].op << " " << results[i].max_error;
  }
}

TEST(GradCheckSuite, TinyToleranceFailsInSinglePrecision) {
  GradCheckSuiteOptions o;
  o.instances = 2;
  o.tolerance = 1e-12;
  std::size_t failures = 0;
  for (const auto& r : run_gradcheck_suite(o)) failures += r.passed ? 0 : 1;
  EXPECT_GT(failures, 0u);
}
