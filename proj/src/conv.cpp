#include <Eigen/Core>
#include <algorithm>
#include <string>

#include "avd/errors.hpp"
#include "avd/ops.hpp"

namespace avd {

namespace {

using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMajor>;
using ConstMapMat = Eigen::Map<const RowMajor>;

std::string triple_to_string(const Triple& t) {
  return "(" + std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]) + ")";
}

// Geometry of a forward cross-correlation: `in` is the (zero-padded) source
// volume and `out` the sampled grid. The transposed op reuses the same
// geometry with the roles of the two volumes swapped.
struct ConvGeometry {
  std::size_t channels = 0;  // channels of the `in` volume
  Triple in{};
  Triple kernel{};
  Triple stride{};
  Triple padding{};
  Triple out{};

  std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::size_t col_rows() const { return channels * kernel_volume(); }
};

// Range of output positions o with 0 <= o*s - p + k < extent.
inline void valid_range(std::size_t out_extent, std::size_t in_extent, std::size_t s, std::size_t p, std::size_t k,
                        std::size_t& lo, std::size_t& hi) {
  // o*s >= p - k  and  o*s < in_extent + p - k
  const long long offset = static_cast<long long>(k) - static_cast<long long>(p);
  long long first = 0;
  if (offset < 0) first = (-offset + static_cast<long long>(s) - 1) / static_cast<long long>(s);
  const long long limit = static_cast<long long>(in_extent) - offset;  // o*s < limit
  long long last = limit <= 0 ? 0 : (limit - 1) / static_cast<long long>(s) + 1;
  last = std::min<long long>(last, static_cast<long long>(out_extent));
  first = std::min<long long>(first, last);
  lo = static_cast<std::size_t>(first);
  hi = static_cast<std::size_t>(last);
}

// Columns for output time slices [t_begin, t_end) only.
void im2col(const ConvGeometry& g, const float* src, float* col, std::size_t t_begin, std::size_t t_end) {
  const std::size_t slice = g.out[1] * g.out[2];
  const std::size_t plane_out = (t_end - t_begin) * slice;
  const std::size_t in_hw = g.in[1] * g.in[2];
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* src_c = src + c * g.in_volume();
    for (std::size_t kt = 0; kt < g.kernel[0]; ++kt) {
      std::size_t t_lo, t_hi;
      valid_range(g.out[0], g.in[0], g.stride[0], g.padding[0], kt, t_lo, t_hi);
      t_lo = std::clamp(t_lo, t_begin, t_end);
      t_hi = std::clamp(t_hi, t_begin, t_end);
      for (std::size_t kh = 0; kh < g.kernel[1]; ++kh) {
        std::size_t h_lo, h_hi;
        valid_range(g.out[1], g.in[1], g.stride[1], g.padding[1], kh, h_lo, h_hi);
        for (std::size_t kw = 0; kw < g.kernel[2]; ++kw, ++row) {
          std::size_t w_lo, w_hi;
          valid_range(g.out[2], g.in[2], g.stride[2], g.padding[2], kw, w_lo, w_hi);
          float* dst = col + row * plane_out;
          std::fill(dst, dst + plane_out, 0.0f);
          for (std::size_t to = t_lo; to < t_hi; ++to) {
            const std::size_t ti = to * g.stride[0] + kt - g.padding[0];
            for (std::size_t ho = h_lo; ho < h_hi; ++ho) {
              const std::size_t hi = ho * g.stride[1] + kh - g.padding[1];
              const float* s = src_c + ti * in_hw + hi * g.in[2];
              float* d = dst + (to - t_begin) * slice + ho * g.out[2];
              if (g.stride[2] == 1) {
                const std::size_t wi0 = w_lo + kw - g.padding[2];
                std::copy(s + wi0, s + wi0 + (w_hi - w_lo), d + w_lo);
              } else {
                for (std::size_t wo = w_lo; wo < w_hi; ++wo) d[wo] = s[wo * g.stride[2] + kw - g.padding[2]];
              }
            }
          }
        }
      }
    }
  }
}

// Scatter-add of a column matrix back into a volume (adjoint of im2col).
void col2im(const ConvGeometry& g, const float* col, float* dst, std::size_t t_begin, std::size_t t_end) {
  const std::size_t slice = g.out[1] * g.out[2];
  const std::size_t plane_out = (t_end - t_begin) * slice;
  const std::size_t in_hw = g.in[1] * g.in[2];
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    float* dst_c = dst + c * g.in_volume();
    for (std::size_t kt = 0; kt < g.kernel[0]; ++kt) {
      std::size_t t_lo, t_hi;
      valid_range(g.out[0], g.in[0], g.stride[0], g.padding[0], kt, t_lo, t_hi);
      t_lo = std::clamp(t_lo, t_begin, t_end);
      t_hi = std::clamp(t_hi, t_begin, t_end);
      for (std::size_t kh = 0; kh < g.kernel[1]; ++kh) {
        std::size_t h_lo, h_hi;
        valid_range(g.out[1], g.in[1], g.stride[1], g.padding[1], kh, h_lo, h_hi);
        for (std::size_t kw = 0; kw < g.kernel[2]; ++kw, ++row) {
          std::size_t w_lo, w_hi;
          valid_range(g.out[2], g.in[2], g.stride[2], g.padding[2], kw, w_lo, w_hi);
          const float* srow = col + row * plane_out;
          for (std::size_t to = t_lo; to < t_hi; ++to) {
            const std::size_t ti = to * g.stride[0] + kt - g.padding[0];
            for (std::size_t ho = h_lo; ho < h_hi; ++ho) {
              const std::size_t hi = ho * g.stride[1] + kh - g.padding[1];
              float* d = dst_c + ti * in_hw + hi * g.in[2];
              const float* s = srow + (to - t_begin) * slice + ho * g.out[2];
              for (std::size_t wo = w_lo; wo < w_hi; ++wo) d[wo * g.stride[2] + kw - g.padding[2]] += s[wo];
            }
          }
        }
      }
    }
  }
}

void check_rank5(const Tensor& t, const char* what, const char* op) {
  if (t.rank() != 5) {
    throw DimensionError(std::string(op) + ": " + what + " must be rank 5, got " + shape_to_string(t.shape()));
  }
}

Triple spatial_dims(const Tensor& t) { return {t.dim(2), t.dim(3), t.dim(4)}; }

}  // namespace

Triple conv3d_output_dims(const Triple& in, const Triple& kernel, const Conv3dOptions& options) {
  Triple out{};
  for (std::size_t d = 0; d < 3; ++d) {
    if (options.stride[d] == 0) throw DimensionError("conv3d: stride must be positive");
    const std::size_t padded = in[d] + 2 * options.padding[d];
    if (kernel[d] == 0 || kernel[d] > padded) {
      throw DimensionError("conv3d: kernel " + triple_to_string(kernel) + " larger than padded input " +
                           triple_to_string(in) + " with padding " + triple_to_string(options.padding));
    }
    out[d] = (padded - kernel[d]) / options.stride[d] + 1;
  }
  return out;
}

Triple conv3d_transpose_output_dims(const Triple& in, const Triple& kernel, const Conv3dOptions& options) {
  Triple out{};
  for (std::size_t d = 0; d < 3; ++d) {
    if (options.stride[d] == 0) throw DimensionError("conv3d_transpose: stride must be positive");
    if (options.output_padding[d] >= options.stride[d] && options.output_padding[d] > 0) {
      throw DimensionError("conv3d_transpose: output_padding must be smaller than stride");
    }
    const long long value = (static_cast<long long>(in[d]) - 1) * static_cast<long long>(options.stride[d]) -
                            2 * static_cast<long long>(options.padding[d]) + static_cast<long long>(kernel[d]) +
                            static_cast<long long>(options.output_padding[d]);
    if (value <= 0) {
      throw DimensionError("conv3d_transpose: non-positive output dim " + std::to_string(value) + " for input " +
                           triple_to_string(in));
    }
    out[d] = static_cast<std::size_t>(value);
  }
  return out;
}

// Output time slices per im2col chunk, keeping the column buffer near L2 size.
static std::size_t chunk_slices(const ConvGeometry& g) {
  constexpr std::size_t kTargetFloats = 384 * 1024;
  const std::size_t per_slice = g.col_rows() * g.out[1] * g.out[2];
  return std::clamp<std::size_t>(kTargetFloats / std::max<std::size_t>(per_slice, 1), 1, g.out[0]);
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv3dOptions& options) {
  check_rank5(input, "input", "conv3d");
  check_rank5(kernel, "kernel", "conv3d");
  const std::size_t n = input.dim(0), cin = input.dim(1), cout = kernel.dim(0);
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv3d: kernel " + shape_to_string(kernel.shape()) + " does not match input channels of " +
                         shape_to_string(input.shape()));
  }
  if (bias.numel() != cout) throw DimensionError("conv3d: bias length must equal output channels");

  ConvGeometry g;
  g.channels = cin;
  g.in = spatial_dims(input);
  g.kernel = spatial_dims(kernel);
  g.stride = options.stride;
  g.padding = options.padding;
  g.out = conv3d_output_dims(g.in, g.kernel, options);

  const auto rows = static_cast<Eigen::Index>(g.col_rows());
  const auto plane = static_cast<Eigen::Index>(g.out_volume());
  const auto co = static_cast<Eigen::Index>(cout);
  const std::size_t slice = g.out[1] * g.out[2];
  const std::size_t step = chunk_slices(g);
  std::vector<float> out(n * cout * g.out_volume());
  std::vector<float> col(g.col_rows() * step * slice);
  ConstMapMat kmat(kernel.data().data(), co, rows);
  auto b = bias.data();
  for (std::size_t s = 0; s < n; ++s) {
    const float* src = input.data().data() + s * cin * g.in_volume();
    MapMat o(out.data() + s * cout * g.out_volume(), co, plane);
    for (std::size_t t0 = 0; t0 < g.out[0]; t0 += step) {
      const std::size_t t1 = std::min(g.out[0], t0 + step);
      const auto width = static_cast<Eigen::Index>((t1 - t0) * slice);
      im2col(g, src, col.data(), t0, t1);
      o.middleCols(static_cast<Eigen::Index>(t0 * slice), width).noalias() =
          kmat * ConstMapMat(col.data(), rows, width);
    }
    for (std::size_t c = 0; c < cout; ++c) o.row(static_cast<Eigen::Index>(c)).array() += b[c];
  }

  Shape shape{n, cout, g.out[0], g.out[1], g.out[2]};
  return record_op("conv3d", std::move(shape), std::move(out), {input, kernel, bias},
                   [input, kernel, bias, g, n, cin, cout](std::span<const float> grad) {
                     const auto rows = static_cast<Eigen::Index>(g.col_rows());
                     const auto plane = static_cast<Eigen::Index>(g.out_volume());
                     const auto co = static_cast<Eigen::Index>(cout);
                     const std::size_t slice = g.out[1] * g.out[2];
                     const std::size_t step = chunk_slices(g);
                     std::vector<float> col(g.col_rows() * step * slice);
                     ConstMapMat kmat(kernel.data().data(), co, rows);
                     float* gk = kernel.requires_grad() ? kernel.mutable_grad().data() : nullptr;
                     float* gx = input.requires_grad() ? input.mutable_grad().data() : nullptr;
                     for (std::size_t s = 0; s < n; ++s) {
                       ConstMapMat go(grad.data() + s * cout * g.out_volume(), co, plane);
                       const float* src = input.data().data() + s * cin * g.in_volume();
                       for (std::size_t t0 = 0; t0 < g.out[0]; t0 += step) {
                         const std::size_t t1 = std::min(g.out[0], t0 + step);
                         const auto width = static_cast<Eigen::Index>((t1 - t0) * slice);
                         const auto go_chunk = go.middleCols(static_cast<Eigen::Index>(t0 * slice), width);
                         if (gk) {
                           im2col(g, src, col.data(), t0, t1);
                           MapMat(gk, co, rows).noalias() += go_chunk * ConstMapMat(col.data(), rows, width).transpose();
                         }
                         if (gx) {
                           MapMat(col.data(), rows, width).noalias() = kmat.transpose() * go_chunk;
                           col2im(g, col.data(), gx + s * cin * g.in_volume(), t0, t1);
                         }
                       }
                     }
                     if (bias.requires_grad()) {
                       auto gb = bias.mutable_grad();
                       for (std::size_t c = 0; c < cout; ++c) {
                         double acc = 0.0;
                         for (std::size_t s = 0; s < n; ++s) {
                           const float* p = grad.data() + (s * cout + c) * g.out_volume();
                           for (std::size_t i = 0; i < g.out_volume(); ++i) acc += p[i];
                         }
                         gb[c] += static_cast<float>(acc);
                       }
                     }
                   });
}

Tensor conv3d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        const Conv3dOptions& options) {
  check_rank5(input, "input", "conv3d_transpose");
  check_rank5(kernel, "kernel", "conv3d_transpose");
  const std::size_t n = input.dim(0), cin = input.dim(1), cout = kernel.dim(1);
  if (kernel.dim(0) != cin) {
    throw DimensionError("conv3d_transpose: kernel " + shape_to_string(kernel.shape()) +
                         " does not match input channels of " + shape_to_string(input.shape()));
  }
  if (bias.numel() != cout) throw DimensionError("conv3d_transpose: bias length must equal output channels");

  // Forward conv geometry whose input-gradient this op computes.
  ConvGeometry g;
  g.channels = cout;
  g.kernel = spatial_dims(kernel);
  g.stride = options.stride;
  g.padding = options.padding;
  g.out = spatial_dims(input);
  g.in = conv3d_transpose_output_dims(g.out, g.kernel, options);
  if (conv3d_output_dims(g.in, g.kernel, options) != g.out) {
    throw DimensionError("conv3d_transpose: inconsistent geometry for input " + shape_to_string(input.shape()));
  }

  const auto rows = static_cast<Eigen::Index>(g.col_rows());
  const auto plane = static_cast<Eigen::Index>(g.out_volume());
  const auto ci = static_cast<Eigen::Index>(cin);
  const std::size_t slice = g.out[1] * g.out[2];
  const std::size_t step = chunk_slices(g);
  std::vector<float> out(n * cout * g.in_volume(), 0.0f);
  std::vector<float> col(g.col_rows() * step * slice);
  ConstMapMat kmat(kernel.data().data(), ci, rows);
  auto b = bias.data();
  for (std::size_t s = 0; s < n; ++s) {
    ConstMapMat x(input.data().data() + s * cin * g.out_volume(), ci, plane);
    float* dst = out.data() + s * cout * g.in_volume();
    for (std::size_t t0 = 0; t0 < g.out[0]; t0 += step) {
      const std::size_t t1 = std::min(g.out[0], t0 + step);
      const auto width = static_cast<Eigen::Index>((t1 - t0) * slice);
      MapMat(col.data(), rows, width).noalias() =
          kmat.transpose() * x.middleCols(static_cast<Eigen::Index>(t0 * slice), width);
      col2im(g, col.data(), dst, t0, t1);
    }
    for (std::size_t c = 0; c < cout; ++c) {
      float* p = dst + c * g.in_volume();
      for (std::size_t i = 0; i < g.in_volume(); ++i) p[i] += b[c];
    }
  }

  Shape shape{n, cout, g.in[0], g.in[1], g.in[2]};
  return record_op("conv3d_transpose", std::move(shape), std::move(out), {input, kernel, bias},
                   [input, kernel, bias, g, n, cin, cout](std::span<const float> grad) {
                     const auto rows = static_cast<Eigen::Index>(g.col_rows());
                     const auto plane = static_cast<Eigen::Index>(g.out_volume());
                     const auto ci = static_cast<Eigen::Index>(cin);
                     const std::size_t slice = g.out[1] * g.out[2];
                     const std::size_t step = chunk_slices(g);
                     std::vector<float> col(g.col_rows() * step * slice);
                     ConstMapMat kmat(kernel.data().data(), ci, rows);
                     float* gk = kernel.requires_grad() ? kernel.mutable_grad().data() : nullptr;
                     float* gx = input.requires_grad() ? input.mutable_grad().data() : nullptr;
                     for (std::size_t s = 0; s < n; ++s) {
                       const float* gsrc = grad.data() + s * cout * g.in_volume();
                       ConstMapMat x(input.data().data() + s * cin * g.out_volume(), ci, plane);
                       for (std::size_t t0 = 0; t0 < g.out[0]; t0 += step) {
                         const std::size_t t1 = std::min(g.out[0], t0 + step);
                         const auto offset = static_cast<Eigen::Index>(t0 * slice);
                         const auto width = static_cast<Eigen::Index>((t1 - t0) * slice);
                         im2col(g, gsrc, col.data(), t0, t1);
                         ConstMapMat gcol(col.data(), rows, width);
                         if (gx) {
                           MapMat(gx + s * cin * g.out_volume(), ci, plane).middleCols(offset, width).noalias() +=
                               kmat * gcol;
                         }
                         if (gk) MapMat(gk, ci, rows).noalias() += x.middleCols(offset, width) * gcol.transpose();
                       }
                     }
                     if (bias.requires_grad()) {
                       auto gb = bias.mutable_grad();
                       for (std::size_t c = 0; c < cout; ++c) {
                         double acc = 0.0;
                         for (std::size_t s = 0; s < n; ++s) {
                           const float* p = grad.data() + (s * cout + c) * g.in_volume();
                           for (std::size_t i = 0; i < g.in_volume(); ++i) acc += p[i];
                         }
                         gb[c] += static_cast<float>(acc);
                       }
                     }
                   });
}

}  // namespace avd
