#pragma once

// Independent references shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "avd/ops.hpp"
#include "avd/tensor.hpp"

namespace avd::testkit {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f,
                            bool requires_grad = false) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(std::move(shape), 0.0f, requires_grad);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Six nested loops over (n, co, ot, oh, ow) x (ci, kt, kh, kw), accumulated
/// in double with bias added last. Shares no code with the library.
inline std::vector<double> naive_conv3d(const Tensor& x, const Tensor& k, const Tensor& b,
                                        const Conv3dOptions& o, Shape& out_shape) {
  const auto N = x.dim(0), Ci = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  const auto Co = k.dim(0), kT = k.dim(2), kH = k.dim(3), kW = k.dim(4);
  const long pt = static_cast<long>(o.padding[0]), ph = static_cast<long>(o.padding[1]),
             pw = static_cast<long>(o.padding[2]);
  const std::size_t oT = (T + 2 * o.padding[0] - kT) / o.stride[0] + 1;
  const std::size_t oH = (H + 2 * o.padding[1] - kH) / o.stride[1] + 1;
  const std::size_t oW = (W + 2 * o.padding[2] - kW) / o.stride[2] + 1;
  out_shape = {N, Co, oT, oH, oW};
  std::vector<double> out(N * Co * oT * oH * oW, 0.0);
  auto xd = x.data();
  auto kd = k.data();
  auto bd = b.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t t = 0; t < oT; ++t)
        for (std::size_t i = 0; i < oH; ++i)
          for (std::size_t j = 0; j < oW; ++j) {
            double acc = 0.0;
            for (std::size_t ci = 0; ci < Ci; ++ci)
              for (std::size_t a = 0; a < kT; ++a)
                for (std::size_t c = 0; c < kH; ++c)
                  for (std::size_t d = 0; d < kW; ++d) {
                    const long st = static_cast<long>(t * o.stride[0] + a) - pt;
                    const long si = static_cast<long>(i * o.stride[1] + c) - ph;
                    const long sj = static_cast<long>(j * o.stride[2] + d) - pw;
                    if (st < 0 || si < 0 || sj < 0 || st >= static_cast<long>(T) || si >= static_cast<long>(H) ||
                        sj >= static_cast<long>(W))
                      continue;
                    acc += static_cast<double>(xd[(((n * Ci + ci) * T + st) * H + si) * W + sj]) *
                           kd[(((co * Ci + ci) * kT + a) * kH + c) * kW + d];
                  }
            out[(((n * Co + co) * oT + t) * oH + i) * oW + j] = acc + bd[co];
          }
  return out;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

struct ConvSweepResult {
  std::size_t shapes = 0;
  double max_forward_rel = 0.0;  // ||conv - naive|| / ||naive|| per shape, worst case
  double max_adjoint_rel = 0.0;  // |<conv x, y> - <x, conv^T y>| / |<conv x, y>|, worst case
};

/// Random geometries (batch, channels, extents, kernel, stride, padding)
/// compared against naive_conv3d, plus the inner-product adjointness of
/// conv3d_transpose on the same kernel.
inline ConvSweepResult conv_oracle_sweep(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  ConvSweepResult r;
  while (r.shapes < count) {
    Conv3dOptions o;
    Triple kernel{}, extent{};
    for (int d = 0; d < 3; ++d) {
      kernel[d] = pick(1, 4);
      o.stride[d] = pick(1, 3);
      o.padding[d] = pick(0, kernel[d] - 1);
      extent[d] = pick(kernel[d], kernel[d] + 6);
    }
    const std::size_t n = pick(1, 3), ci = pick(1, 4), co = pick(1, 5);
    Tensor x = random_tensor({n, ci, extent[0], extent[1], extent[2]}, rng);
    Tensor k = random_tensor({co, ci, kernel[0], kernel[1], kernel[2]}, rng);
    Tensor b = random_tensor({co}, rng);
    Tensor y = conv3d(x, k, b, o);
    Shape ref_shape;
    auto ref = naive_conv3d(x, k, b, o, ref_shape);
    if (y.shape() != ref_shape) {
      r.max_forward_rel = INFINITY;
      return r;
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      num += (y.data()[i] - ref[i]) * (y.data()[i] - ref[i]);
      den += ref[i] * ref[i];
    }
    r.max_forward_rel = std::max(r.max_forward_rel, std::sqrt(num / std::max(den, 1e-30)));

    // Adjointness on the bias-free maps.
    Conv3dOptions ot = o;
    for (int d = 0; d < 3; ++d) ot.output_padding[d] = (extent[d] + 2 * o.padding[d] - kernel[d]) % o.stride[d];
    Tensor y0 = conv3d(x, k, Tensor({co}), o);
    Tensor g = random_tensor(y0.shape(), rng);
    Tensor xt = conv3d_transpose(g, k, Tensor({ci}), ot);
    if (xt.shape() != x.shape()) {
      r.max_adjoint_rel = INFINITY;
      return r;
    }
    const double lhs = dot(y0.data(), g.data());
    const double rhs = dot(x.data(), xt.data());
    r.max_adjoint_rel = std::max(r.max_adjoint_rel, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12));
    ++r.shapes;
  }
  return r;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("avd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace avd::testkit
