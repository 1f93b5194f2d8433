#include "avd/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <random>

#include "avd/grad_check.hpp"
#include "avd/losses.hpp"
#include "avd/ops.hpp"

namespace avd {

namespace {

// Perturbation sizes. Ops that are linear or quadratic in any single input
// element have no truncation error under central differences, so a large
// step keeps f32 rounding noise far below the tolerance. Smooth nonlinear
// ops use a small step; piecewise-linear ones keep inputs away from kinks.
constexpr double kExactStep = 0.25;
constexpr double kSmoothStep = 5e-2;
constexpr double kLogStep = 1e-3;
// Batch statistics make batchnorm curvature grow as the per-channel count shrinks.
constexpr double kNormStep = 0.1;

struct Instance {
  std::vector<Tensor> inputs;
  ScalarFunction f;
  double step;
  bool fourth_order = false;
};

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::size_t dim(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }

  Tensor normal(Shape s, float stddev = 1.0f) {
    std::normal_distribution<float> d(0.0f, stddev);
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = d(rng_);
    return t;
  }

  Tensor uniform(Shape s, float lo, float hi) {
    std::uniform_real_distribution<float> d(lo, hi);
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = d(rng_);
    return t;
  }

  /// Magnitudes in [lo, hi] with random signs.
  Tensor away_from_zero(Shape s, float lo, float hi) {
    Tensor t = uniform(std::move(s), lo, hi);
    std::bernoulli_distribution flip(0.5);
    for (auto& v : t.data()) {
      if (flip(rng_)) v = -v;
    }
    return t;
  }

  /// [n, c, s] with each channel's values spread evenly over [-2, 2]
  /// (shuffled, lightly jittered) so batch statistics are well conditioned.
  Tensor spread_channels(std::size_t n, std::size_t c, std::size_t s) {
    const std::size_t m = n * s;
    Tensor t({n, c, s});
    std::normal_distribution<float> jitter(0.0f, 0.1f);
    std::vector<float> vals(m);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < m; ++i) vals[i] = -2.0f + 4.0f * static_cast<float>(i) / static_cast<float>(m - 1);
      std::shuffle(vals.begin(), vals.end(), rng_);
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t b = i / s, j = i % s;
        t.data()[(b * c + ch) * s + j] = vals[i] + jitter(rng_);
      }
    }
    return t;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

Shape random_shape(Gen& g, std::size_t max_rank = 3) {
  Shape s(g.dim(1, max_rank));
  for (auto& d : s) d = g.dim(1, 4);
  return s;
}

// Projects an arbitrary output onto a fixed random direction so every
// output element contributes to the scalar being differentiated.
ScalarFunction projected(std::function<Tensor(const std::vector<Tensor>&)> op, Tensor weights) {
  return [op = std::move(op), weights](const std::vector<Tensor>& in) { return sum(mul(op(in), weights)); };
}

Shape output_shape(const std::function<Tensor(const std::vector<Tensor>&)>& op, const std::vector<Tensor>& in) {
  NoGradGuard no_grad;
  return op(in).shape();
}

Instance projected_instance(Gen& g, std::function<Tensor(const std::vector<Tensor>&)> op, std::vector<Tensor> in,
                            double step) {
  Tensor w = g.normal(output_shape(op, in), 0.5f);
  return {std::move(in), projected(std::move(op), std::move(w)), step, step == kSmoothStep};
}

using Builder = std::function<Instance(Gen&)>;

Instance elementwise(Gen& g, Tensor (*op)(const Tensor&, const Tensor&)) {
  Shape s = random_shape(g);
  Shape bs = s;
  switch (g.dim(0, 2)) {
    case 0:
      break;
    case 1:
      bs = Shape{1};
      break;
    default:
      bs.erase(bs.begin(), bs.begin() + static_cast<std::ptrdiff_t>(g.dim(0, s.size() - 1)));
  }
  return projected_instance(
      g, [op](const std::vector<Tensor>& in) { return op(in[0], in[1]); }, {g.normal(s), g.normal(bs)}, kExactStep);
}

std::vector<std::size_t> random_axes(Gen& g, std::size_t rank) {
  std::vector<std::size_t> axes;
  for (std::size_t a = 0; a < rank; ++a) {
    if (g.dim(0, 1)) axes.push_back(a);
  }
  if (axes.size() == rank) axes.clear();  // full reduction
  return axes;
}

Conv3dOptions random_conv_options(Gen& g, const Triple& kernel, bool transposed) {
  Conv3dOptions o;
  for (std::size_t i = 0; i < 3; ++i) {
    o.stride[i] = g.dim(1, 2);
    o.padding[i] = g.dim(0, kernel[i] - 1);
    if (transposed && o.stride[i] > 1) o.output_padding[i] = g.dim(0, o.stride[i] - 1);
  }
  return o;
}

std::vector<std::pair<std::string, Builder>> builders() {
  std::vector<std::pair<std::string, Builder>> b;
  b.emplace_back("add", [](Gen& g) { return elementwise(g, add); });
  b.emplace_back("sub", [](Gen& g) { return elementwise(g, sub); });
  b.emplace_back("mul", [](Gen& g) { return elementwise(g, mul); });
  b.emplace_back("add_scalar", [](Gen& g) {
    const float c = g.normal({1}).item();
    return projected_instance(g, [c](auto& in) { return add_scalar(in[0], c); }, {g.normal(random_shape(g))},
                              kExactStep);
  });
  b.emplace_back("scale", [](Gen& g) {
    const float c = g.normal({1}).item();
    return projected_instance(g, [c](auto& in) { return scale(in[0], c); }, {g.normal(random_shape(g))}, kExactStep);
  });
  b.emplace_back("square", [](Gen& g) {
    return projected_instance(g, [](auto& in) { return square(in[0]); }, {g.normal(random_shape(g))}, kExactStep);
  });
  b.emplace_back("sum", [](Gen& g) {
    Shape s = random_shape(g, 4);
    auto axes = random_axes(g, s.size());
    return projected_instance(g, [axes](auto& in) { return sum(in[0], axes); }, {g.normal(s)}, kExactStep);
  });
  b.emplace_back("mean", [](Gen& g) {
    Shape s = random_shape(g, 4);
    auto axes = random_axes(g, s.size());
    return projected_instance(g, [axes](auto& in) { return mean(in[0], axes); }, {g.normal(s)}, kExactStep);
  });
  b.emplace_back("relu", [](Gen& g) {
    return projected_instance(g, [](auto& in) { return relu(in[0]); },
                              {g.away_from_zero(random_shape(g), 0.3f, 1.5f)}, 0.1);
  });
  b.emplace_back("leaky_relu", [](Gen& g) {
    const float slope = g.uniform({1}, 0.05f, 0.5f).item();
    return projected_instance(g, [slope](auto& in) { return leaky_relu(in[0], slope); },
                              {g.away_from_zero(random_shape(g), 0.3f, 1.5f)}, 0.1);
  });
  b.emplace_back("sigmoid", [](Gen& g) {
    return projected_instance(g, [](auto& in) { return sigmoid(in[0]); }, {g.normal(random_shape(g), 2.0f)},
                              kSmoothStep);
  });
  b.emplace_back("tanh", [](Gen& g) {
    return projected_instance(g, [](auto& in) { return avd::tanh(in[0]); }, {g.normal(random_shape(g))}, kSmoothStep);
  });
  b.emplace_back("matmul", [](Gen& g) {
    const std::size_t m = g.dim(1, 4), k = g.dim(1, 5), p = g.dim(1, 4);
    return projected_instance(g, [](auto& in) { return matmul(in[0], in[1]); }, {g.normal({m, k}), g.normal({k, p})},
                              kExactStep);
  });
  b.emplace_back("reshape", [](Gen& g) {
    const std::size_t a = g.dim(1, 4), c = g.dim(1, 4);
    return projected_instance(g, [a, c](auto& in) { return reshape(in[0], {c, a}); }, {g.normal({a, c})}, kExactStep);
  });
  b.emplace_back("conv3d", [](Gen& g) {
    const std::size_t n = g.dim(1, 2), cin = g.dim(1, 3), cout = g.dim(1, 3);
    Triple k{g.dim(1, 3), g.dim(1, 3), g.dim(1, 3)};
    Conv3dOptions o = random_conv_options(g, k, false);
    Triple in;
    for (std::size_t i = 0; i < 3; ++i) in[i] = g.dim(std::max<std::size_t>(k[i], 1), k[i] + 3);
    return projected_instance(
        g, [o](auto& x) { return conv3d(x[0], x[1], x[2], o); },
        {g.normal({n, cin, in[0], in[1], in[2]}, 0.5f), g.normal({cout, cin, k[0], k[1], k[2]}, 0.5f), g.normal({cout})},
        kExactStep);
  });
  b.emplace_back("conv3d_transpose", [](Gen& g) {
    const std::size_t n = g.dim(1, 2), cin = g.dim(1, 3), cout = g.dim(1, 3);
    Triple k{g.dim(1, 3), g.dim(1, 3), g.dim(1, 3)};
    Conv3dOptions o = random_conv_options(g, k, true);
    Triple in;
    for (std::size_t i = 0; i < 3; ++i) {
      // Smallest input whose transposed output is positive.
      std::size_t lo = 1;
      while ((lo - 1) * o.stride[i] + k[i] + o.output_padding[i] <= 2 * o.padding[i]) ++lo;
      in[i] = g.dim(lo, lo + 2);
    }
    return projected_instance(
        g, [o](auto& x) { return conv3d_transpose(x[0], x[1], x[2], o); },
        {g.normal({n, cin, in[0], in[1], in[2]}, 0.5f), g.normal({cin, cout, k[0], k[1], k[2]}, 0.5f), g.normal({cout})},
        kExactStep);
  });
  for (Mode mode : {Mode::train, Mode::train_frozen, Mode::eval}) {
    const char* name = mode == Mode::train ? "batchnorm(train)"
                       : mode == Mode::train_frozen ? "batchnorm(train_frozen)"
                                                    : "batchnorm(eval)";
    b.emplace_back(name, [mode](Gen& g) {
      const std::size_t n = g.dim(2, 3), c = g.dim(1, 3), s = g.dim(3, 5);
      Tensor rm = g.normal({c}, 0.5f), rv = g.uniform({c}, 0.5f, 2.0f);
      auto op = [mode, rm, rv](const std::vector<Tensor>& in) {
        // Fresh statistics per call so repeated evaluations see identical state.
        BatchNormStats stats{rm.clone(), rv.clone()};
        return batchnorm(in[0], in[1], in[2], stats, mode);
      };
      Instance inst = projected_instance(g, op, {g.spread_channels(n, c, s), g.uniform({c}, 0.5f, 1.5f), g.normal({c})},
                                         mode == Mode::eval ? kExactStep : kNormStep);
      inst.fourth_order = mode != Mode::eval;
      return inst;
    });
  }
  b.emplace_back("softmax_cross_entropy", [](Gen& g) {
    const std::size_t n = g.dim(1, 4), k = g.dim(2, 5);
    std::vector<std::uint32_t> labels(n);
    for (auto& l : labels) l = static_cast<std::uint32_t>(g.dim(0, k - 1));
    return Instance{{g.normal({n, k})}, [labels](auto& in) { return softmax_cross_entropy(in[0], labels); },
                    kSmoothStep, true};
  });
  b.emplace_back("reconstruction_loss", [](Gen& g) {
    Shape s = random_shape(g, 4);
    return Instance{{g.uniform(s, 0.0f, 1.0f), g.uniform(s, 0.0f, 1.0f)},
                    [](auto& in) { return reconstruction_loss(in[0], in[1]); }, kExactStep};
  });
  b.emplace_back("teacher_loss", [](Gen& g) {
    const std::size_t n = g.dim(1, 6);
    return Instance{{g.uniform({n}, 0.2f, 0.8f), g.uniform({n}, 0.2f, 0.8f)},
                    [](auto& in) { return teacher_loss(in[0], in[1]); }, kLogStep};
  });
  b.emplace_back("generator_loss", [](Gen& g) {
    const std::size_t n = g.dim(1, 6);
    return Instance{{g.uniform({n}, 0.2f, 0.8f)}, [](auto& in) { return generator_loss(in[0]); }, kLogStep};
  });
  b.emplace_back("avd_loss", [](Gen& g) {
    const float lambda = g.uniform({1}, 0.0f, 1.0f).item();
    return Instance{{g.uniform({1}, 0.0f, 1.0f), g.uniform({1}, 0.5f, 3.0f)},
                    [lambda](auto& in) { return avd_loss(in[0], in[1], lambda); }, kExactStep};
  });
  return b;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> names;
  for (auto& [name, _] : builders()) names.push_back(name);
  return names;
}

std::vector<OpCheckResult> run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  std::vector<OpCheckResult> results;
  std::uint64_t op_index = 0;
  for (auto& [name, build] : builders()) {
    Gen gen(options.seed * 1000003ull + op_index++);
    OpCheckResult r;
    r.op = name;
    for (std::size_t i = 0; i < options.instances; ++i) {
      Instance inst = build(gen);
      GradCheckOptions gc;
      gc.step = inst.step;
      gc.tolerance = options.tolerance;
      gc.fourth_order = inst.fourth_order;
      auto rep = grad_check(inst.f, inst.inputs, gc);
      r.max_error = std::max(r.max_error, rep.max_error);
      r.elements += rep.elements_checked;
      ++r.instances;
    }
    r.passed = r.instances > 0 && r.max_error < options.tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace avd
