#include "avd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "avd/errors.hpp"

namespace avd {

namespace {

using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMajor>;
using ConstMapMat = Eigen::Map<const RowMajor>;

// Length of the repeating pattern of `b` inside `a`, or throws.
std::size_t broadcast_period(const Tensor& a, const Tensor& b, const char* op) {
  if (b.numel() == 1) return 1;
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin())) return b.numel();
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(as) + " vs " + shape_to_string(bs));
}

void accumulate_broadcast(const Tensor& b, std::span<const float> contrib, std::size_t period) {
  auto gb = b.mutable_grad();
  if (period == contrib.size()) {
    for (std::size_t i = 0; i < contrib.size(); ++i) gb[i] += contrib[i];
    return;
  }
  std::vector<double> acc(period, 0.0);
  for (std::size_t i = 0; i < contrib.size(); ++i) acc[i % period] += contrib[i];
  for (std::size_t j = 0; j < period; ++j) gb[j] += static_cast<float>(acc[j]);
}

template <class Fn>
std::vector<float> map_unary(const Tensor& a, Fn fn) {
  auto x = a.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fn(x[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t period = broadcast_period(a, b, "add");
  auto x = a.data();
  auto y = b.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i % period];
  return record_op("add", a.shape(), std::move(out), {a, b}, [a, b, period](std::span<const float> g) {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) accumulate_broadcast(b, g, period);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const std::size_t period = broadcast_period(a, b, "sub");
  auto x = a.data();
  auto y = b.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i % period];
  return record_op("sub", a.shape(), std::move(out), {a, b}, [a, b, period](std::span<const float> g) {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      std::vector<float> neg(g.begin(), g.end());
      for (auto& v : neg) v = -v;
      accumulate_broadcast(b, neg, period);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t period = broadcast_period(a, b, "mul");
  auto x = a.data();
  auto y = b.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i % period];
  return record_op("mul", a.shape(), std::move(out), {a, b}, [a, b, period](std::span<const float> g) {
    auto x = a.data();
    auto y = b.data();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i % period];
    }
    if (b.requires_grad()) {
      std::vector<float> contrib(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) contrib[i] = g[i] * x[i];
      accumulate_broadcast(b, contrib, period);
    }
  });
}

Tensor add_scalar(const Tensor& a, float value) {
  auto out = map_unary(a, [value](float v) { return v + value; });
  return record_op("add_scalar", a.shape(), std::move(out), {a}, [a](std::span<const float> g) {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor scale(const Tensor& a, float factor) {
  auto out = map_unary(a, [factor](float v) { return v * factor; });
  return record_op("scale", a.shape(), std::move(out), {a}, [a, factor](std::span<const float> g) {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor square(const Tensor& a) {
  auto out = map_unary(a, [](float v) { return v * v; });
  return record_op("square", a.shape(), std::move(out), {a}, [a](std::span<const float> g) {
    auto x = a.data();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0f * x[i] * g[i];
  });
}

namespace {

struct Reduction {
  Shape out_shape;
  // Input viewed as [outer, reduced, inner] is not general enough for
  // arbitrary axis sets, so we map each input index to its output index.
  std::vector<std::size_t> out_index;
  std::size_t count = 1;  // elements per output
};

Reduction plan_reduction(const Tensor& a, std::span<const std::size_t> axes, const char* op) {
  const auto& shape = a.shape();
  std::vector<bool> reduced(shape.size(), axes.empty());
  for (auto ax : axes) {
    if (ax >= shape.size()) {
      throw DimensionError(std::string(op) + ": axis " + std::to_string(ax) + " invalid for shape " +
                           shape_to_string(shape));
    }
    if (reduced[ax]) throw DimensionError(std::string(op) + ": duplicate axis " + std::to_string(ax));
    reduced[ax] = true;
  }
  Reduction r;
  std::vector<std::size_t> out_strides(shape.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = shape.size(); d-- > 0;) {
    if (reduced[d]) {
      r.count *= shape[d];
    } else {
      out_strides[d] = stride;
      stride *= shape[d];
    }
  }
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (!reduced[d]) r.out_shape.push_back(shape[d]);
  }
  if (r.out_shape.empty()) r.out_shape.push_back(1);

  r.out_index.resize(a.numel());
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) o += idx[d] * out_strides[d];
    r.out_index[i] = o;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return r;
}

Tensor reduce_impl(const Tensor& a, std::span<const std::size_t> axes, bool average, const char* name) {
  auto plan = std::make_shared<Reduction>(plan_reduction(a, axes, name));
  const std::size_t out_n = shape_numel(plan->out_shape);
  std::vector<double> acc(out_n, 0.0);
  auto x = a.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc[plan->out_index[i]] += x[i];
  const double factor = average ? 1.0 / static_cast<double>(plan->count) : 1.0;
  std::vector<float> out(out_n);
  for (std::size_t j = 0; j < out_n; ++j) out[j] = static_cast<float>(acc[j] * factor);
  return record_op(name, plan->out_shape, std::move(out), {a},
                   [a, plan, factor](std::span<const float> g) {
                     auto ga = a.mutable_grad();
                     const auto f = static_cast<float>(factor);
                     for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[plan->out_index[i]] * f;
                   });
}

}  // namespace

Tensor sum(const Tensor& a, std::span<const std::size_t> axes) { return reduce_impl(a, axes, false, "sum"); }
Tensor mean(const Tensor& a, std::span<const std::size_t> axes) { return reduce_impl(a, axes, true, "mean"); }

Tensor relu(const Tensor& a) {
  auto out = map_unary(a, [](float v) { return v > 0.0f ? v : 0.0f; });
  return record_op("relu", a.shape(), std::move(out), {a}, [a](std::span<const float> g) {
    auto x = a.data();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0f) ga[i] += g[i];
    }
  });
}

Tensor leaky_relu(const Tensor& a, float slope) {
  if (!(slope > 0.0f && slope < 1.0f)) throw ConfigError("leaky_relu slope must lie in (0,1)");
  auto out = map_unary(a, [slope](float v) { return v > 0.0f ? v : slope * v; });
  return record_op("leaky_relu", a.shape(), std::move(out), {a}, [a, slope](std::span<const float> g) {
    auto x = a.data();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0f ? g[i] : slope * g[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  auto out = map_unary(a, [](float v) {
    // Split by sign so exp never overflows.
    if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
    const float e = std::exp(v);
    return e / (1.0f + e);
  });
  auto saved = std::make_shared<std::vector<float>>(out);
  return record_op("sigmoid", a.shape(), std::move(out), {a}, [a, saved](std::span<const float> g) {
    auto ga = a.mutable_grad();
    const auto& s = *saved;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (1.0f - s[i]);
  });
}

Tensor tanh(const Tensor& a) {
  auto out = map_unary(a, [](float v) { return std::tanh(v); });
  auto saved = std::make_shared<std::vector<float>>(out);
  return record_op("tanh", a.shape(), std::move(out), {a}, [a, saved](std::span<const float> g) {
    auto ga = a.mutable_grad();
    const auto& t = *saved;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0f - t[i] * t[i]);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 operands, got " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimension mismatch: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  std::vector<float> out(m * p);
  const auto rows = static_cast<Eigen::Index>(m), inner = static_cast<Eigen::Index>(k),
             cols = static_cast<Eigen::Index>(p);
  MapMat(out.data(), rows, cols).noalias() =
      ConstMapMat(a.data().data(), rows, inner) * ConstMapMat(b.data().data(), inner, cols);
  return record_op("matmul", {m, p}, std::move(out), {a, b},
                   [a, b, rows, inner, cols](std::span<const float> g) {
                     ConstMapMat gm(g.data(), rows, cols);
                     if (a.requires_grad()) {
                       MapMat(a.mutable_grad().data(), rows, inner).noalias() +=
                           gm * ConstMapMat(b.data().data(), inner, cols).transpose();
                     }
                     if (b.requires_grad()) {
                       MapMat(b.mutable_grad().data(), inner, cols).noalias() +=
                           ConstMapMat(a.data().data(), rows, inner).transpose() * gm;
                     }
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape) +
                         " changes element count");
  }
  std::vector<float> out(a.data().begin(), a.data().end());
  return record_op("reshape", std::move(shape), std::move(out), {a}, [a](std::span<const float> g) {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode,
                 const BatchNormOptions& options) {
  if (input.rank() < 2) throw DimensionError("batchnorm expects [N,C,...], got " + shape_to_string(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t spatial = input.numel() / (n * c);
  if (gamma.numel() != c || beta.numel() != c || stats.mean.numel() != c || stats.var.numel() != c) {
    throw DimensionError("batchnorm parameters do not match channel count " + std::to_string(c));
  }
  const std::size_t count = n * spatial;
  auto x = input.data();
  auto gm = gamma.data();
  auto bt = beta.data();

  auto xhat = std::make_shared<std::vector<float>>(x.size());
  auto inv_std = std::make_shared<std::vector<float>>(c);
  std::vector<float> out(x.size());

  if (mode == Mode::eval) {
    auto rm = stats.mean.data();
    auto rv = stats.var.data();
    for (std::size_t ch = 0; ch < c; ++ch) (*inv_std)[ch] = 1.0f / std::sqrt(rv[ch] + options.eps);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          const float h = (x[base + s] - rm[ch]) * (*inv_std)[ch];
          (*xhat)[base + s] = h;
          out[base + s] = gm[ch] * h + bt[ch];
        }
      }
    }
    return record_op("batchnorm_eval", input.shape(), std::move(out), {input, gamma, beta},
                     [input, gamma, beta, xhat, inv_std, n, c, spatial](std::span<const float> g) {
                       auto gm = gamma.data();
                       std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
                       float* gx = input.requires_grad() ? input.mutable_grad().data() : nullptr;
                       for (std::size_t b = 0; b < n; ++b) {
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           const std::size_t base = (b * c + ch) * spatial;
                           for (std::size_t s = 0; s < spatial; ++s) {
                             dgamma[ch] += g[base + s] * (*xhat)[base + s];
                             dbeta[ch] += g[base + s];
                             if (gx) gx[base + s] += g[base + s] * gm[ch] * (*inv_std)[ch];
                           }
                         }
                       }
                       if (gamma.requires_grad()) {
                         auto gg = gamma.mutable_grad();
                         for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += static_cast<float>(dgamma[ch]);
                       }
                       if (beta.requires_grad()) {
                         auto gb = beta.mutable_grad();
                         for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += static_cast<float>(dbeta[ch]);
                       }
                     });
  }

  if (count < 2) {
    throw DimensionError("batchnorm in train mode needs more than one value per channel, got input " +
                         shape_to_string(input.shape()));
  }
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * spatial;
      double acc = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) acc += x[base + s];
      mu[ch] += acc;
    }
  }
  for (auto& m : mu) m /= static_cast<double>(count);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * spatial;
      double acc = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) {
        const double d = x[base + s] - mu[ch];
        acc += d * d;
      }
      var[ch] += acc;
    }
  }
  for (auto& v : var) v /= static_cast<double>(count);
  for (std::size_t ch = 0; ch < c; ++ch) {
    (*inv_std)[ch] = static_cast<float>(1.0 / std::sqrt(var[ch] + options.eps));
  }
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * spatial;
      const auto m = static_cast<float>(mu[ch]);
      for (std::size_t s = 0; s < spatial; ++s) {
        const float h = (x[base + s] - m) * (*inv_std)[ch];
        (*xhat)[base + s] = h;
        out[base + s] = gm[ch] * h + bt[ch];
      }
    }
  }
  if (mode == Mode::train) {
    auto rm = stats.mean.data();
    auto rv = stats.var.data();
    const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
    for (std::size_t ch = 0; ch < c; ++ch) {
      rm[ch] = (1.0f - options.momentum) * rm[ch] + options.momentum * static_cast<float>(mu[ch]);
      rv[ch] = (1.0f - options.momentum) * rv[ch] + options.momentum * static_cast<float>(var[ch] * unbias);
    }
  }

  return record_op(
      "batchnorm", input.shape(), std::move(out), {input, gamma, beta},
      [input, gamma, beta, xhat, inv_std, n, c, spatial, count](std::span<const float> g) {
        auto gm = gamma.data();
        std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) {
              dgamma[ch] += static_cast<double>(g[base + s]) * (*xhat)[base + s];
              dbeta[ch] += g[base + s];
            }
          }
        }
        if (input.requires_grad()) {
          // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
          auto gx = input.mutable_grad();
          const double inv_count = 1.0 / static_cast<double>(count);
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t base = (b * c + ch) * spatial;
              const auto mean_dy = static_cast<float>(dbeta[ch] * inv_count);
              const auto mean_dyx = static_cast<float>(dgamma[ch] * inv_count);
              const float k = gm[ch] * (*inv_std)[ch];
              for (std::size_t s = 0; s < spatial; ++s) {
                gx[base + s] += k * (g[base + s] - mean_dy - (*xhat)[base + s] * mean_dyx);
              }
            }
          }
        }
        if (gamma.requires_grad()) {
          auto gg = gamma.mutable_grad();
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += static_cast<float>(dgamma[ch]);
        }
        if (beta.requires_grad()) {
          auto gb = beta.mutable_grad();
          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += static_cast<float>(dbeta[ch]);
        }
      });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::uint32_t> labels) {
  if (logits.rank() != 2) throw DimensionError("cross entropy expects logits [N,K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw DimensionError("cross entropy: label count does not match batch size");
  for (auto l : labels) {
    if (l >= k) throw DimensionError("cross entropy: label " + std::to_string(l) + " out of range");
  }
  auto z = logits.data();
  auto probs = std::make_shared<std::vector<float>>(n * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = z.data() + i * k;
    const float mx = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) {
      (*probs)[i * k + j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    }
    loss += std::log(denom) - static_cast<double>(row[labels[i]] - mx);
  }
  std::vector<std::uint32_t> saved_labels(labels.begin(), labels.end());
  return record_op("softmax_cross_entropy", {1}, {static_cast<float>(loss / static_cast<double>(n))}, {logits},
                   [logits, probs, saved_labels, n, k](std::span<const float> g) {
                     auto gz = logits.mutable_grad();
                     const float f = g[0] / static_cast<float>(n);
                     for (std::size_t i = 0; i < n; ++i) {
                       for (std::size_t j = 0; j < k; ++j) {
                         const float target = j == saved_labels[i] ? 1.0f : 0.0f;
                         gz[i * k + j] += f * ((*probs)[i * k + j] - target);
                       }
                     }
                   });
}

}  // namespace avd
