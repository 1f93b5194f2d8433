#include "avd/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "avd/errors.hpp"

namespace avd {

namespace {

constexpr std::size_t kBlocks = 5;
constexpr std::size_t kMinSide = 8;

// Temporal kernel/padding per block; stride 2 in time, 1 in space, "same"
// spatial padding for the 5x5 spatial kernel.
Conv3dOptions block_options(std::size_t block, bool transposed) {
  const bool collapse = transposed ? block == 0 : block == kBlocks - 1;
  Conv3dOptions o;
  o.stride = {2, 1, 1};
  o.padding = {collapse ? 0u : 1u, 2, 2};
  if (transposed && !collapse) o.output_padding = {1, 0, 0};
  return o;
}

Triple block_kernel(std::size_t block, bool transposed) {
  const bool collapse = transposed ? block == 0 : block == kBlocks - 1;
  return {collapse ? 2u : 3u, 5, 5};
}

Tensor normal_tensor(Shape shape, float stddev, std::mt19937_64& rng, bool requires_grad) {
  std::normal_distribution<float> dist(0.0f, stddev);
  Tensor t(std::move(shape), 0.0f, requires_grad);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

NormParams make_norm(std::size_t channels) {
  return NormParams{Tensor({channels}, 1.0f, true), Tensor({channels}, 0.0f, true),
                    BatchNormStats{Tensor({channels}, 0.0f), Tensor({channels}, 1.0f)}};
}

void append_conv(std::vector<NamedTensor>& out, const std::string& prefix, const ConvLayer& layer) {
  out.push_back({prefix + ".kernel", layer.kernel, true});
  out.push_back({prefix + ".bias", layer.bias, true});
  if (layer.norm) {
    out.push_back({prefix + ".bn.gamma", layer.norm->gamma, true});
    out.push_back({prefix + ".bn.beta", layer.norm->beta, true});
    out.push_back({prefix + ".bn.running_mean", layer.norm->stats.mean, false});
    out.push_back({prefix + ".bn.running_var", layer.norm->stats.var, false});
  }
}

void check_image_batch(const Tensor& images, const char* op) {
  if (images.rank() != 4 || images.dim(1) != kColorChannels) {
    throw DimensionError(std::string(op) + ": expected images [N,3,H,W], got " + shape_to_string(images.shape()));
  }
}

}  // namespace

void ArchConfig::validate() const {
  if (frames != kClipFrames) throw ConfigError("clip length must be " + std::to_string(kClipFrames));
  if (height < kMinSide || width < kMinSide) throw ConfigError("frame sides must be at least 8 pixels");
  if (channels.front() != kColorChannels || channels.back() != kColorChannels) {
    throw ConfigError("encoder must map 3 channels to 3 channels");
  }
  for (auto c : channels) {
    if (c == 0) throw ConfigError("channel widths must be positive");
  }
  for (auto w : teacher_hidden) {
    if (w == 0) throw ConfigError("teacher widths must be positive");
  }
  if (!(leaky_slope > 0.0f && leaky_slope < 1.0f)) throw ConfigError("leaky slope must lie in (0,1)");
}

std::vector<NamedTensor> named_tensors(const EncoderParams& params, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    append_conv(out, prefix + ".block" + std::to_string(i), params.blocks[i]);
  }
  return out;
}

std::vector<NamedTensor> named_tensors(const DecoderParams& params, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    append_conv(out, prefix + ".block" + std::to_string(i), params.blocks[i]);
  }
  return out;
}

std::vector<NamedTensor> named_tensors(const TeacherParams& params, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const std::string p = prefix + ".fc" + std::to_string(i);
    out.push_back({p + ".weight", params.layers[i].weight, true});
    out.push_back({p + ".bias", params.layers[i].bias, true});
  }
  return out;
}

std::vector<NamedTensor> named_tensors(const AvdModel& model) {
  auto out = named_tensors(model.encoder);
  for (auto& t : named_tensors(model.decoder)) out.push_back(std::move(t));
  for (auto& t : named_tensors(model.teacher)) out.push_back(std::move(t));
  return out;
}

std::vector<Tensor> trainable_tensors(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  for (const auto& n : named) {
    if (n.trainable) out.push_back(n.tensor);
  }
  return out;
}

std::uint64_t checksum(const std::vector<NamedTensor>& named) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& n : named) {
    mix(n.name.data(), n.name.size());
    for (auto d : n.tensor.shape()) mix(&d, sizeof d);
    mix(n.tensor.data().data(), n.tensor.numel() * sizeof(float));
  }
  return h;
}

AvdModel init_params(std::uint64_t seed, const ArchConfig& arch) {
  arch.validate();
  AvdModel model;
  model.arch = arch;
  model.decoder.leaky_slope = arch.leaky_slope;
  std::mt19937_64 rng(seed);

  for (std::size_t b = 0; b < kBlocks; ++b) {
    const std::size_t cin = arch.channels[b], cout = arch.channels[b + 1];
    const Triple k = block_kernel(b, false);
    const std::size_t kvol = k[0] * k[1] * k[2];
    const bool last = b == kBlocks - 1;
    const auto fan_in = static_cast<float>(cin * kvol);
    const auto fan_out = static_cast<float>(cout * kvol);
    const float stddev = last ? std::sqrt(2.0f / (fan_in + fan_out)) : std::sqrt(2.0f / fan_in);
    ConvLayer layer{normal_tensor({cout, cin, k[0], k[1], k[2]}, stddev, rng, true), Tensor({cout}, 0.0f, true),
                    block_options(b, false), std::nullopt};
    if (!last) layer.norm = make_norm(cout);
    model.encoder.blocks.push_back(std::move(layer));
  }

  const float leaky_gain = 2.0f / (1.0f + arch.leaky_slope * arch.leaky_slope);
  for (std::size_t b = 0; b < kBlocks; ++b) {
    const std::size_t cin = arch.channels[kBlocks - b], cout = arch.channels[kBlocks - b - 1];
    const Triple k = block_kernel(b, true);
    const auto opts = block_options(b, true);
    const std::size_t kvol = k[0] * k[1] * k[2];
    const bool last = b == kBlocks - 1;
    // Each transposed-conv output sees kvol / stride_volume inputs per channel.
    const auto stride_vol = static_cast<float>(opts.stride[0] * opts.stride[1] * opts.stride[2]);
    const float fan_in = static_cast<float>(cin * kvol) / stride_vol;
    const float fan_out = static_cast<float>(cout * kvol) / stride_vol;
    const float stddev = last ? std::sqrt(2.0f / (fan_in + fan_out)) : std::sqrt(leaky_gain / fan_in);
    ConvLayer layer{normal_tensor({cin, cout, k[0], k[1], k[2]}, stddev, rng, true), Tensor({cout}, 0.0f, true),
                    opts, std::nullopt};
    if (!last) layer.norm = make_norm(cout);
    model.decoder.blocks.push_back(std::move(layer));
  }

  std::vector<std::size_t> widths{kColorChannels * arch.height * arch.width};
  widths.insert(widths.end(), arch.teacher_hidden.begin(), arch.teacher_hidden.end());
  widths.push_back(1);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    const auto fan_in = static_cast<float>(widths[i]);
    const auto fan_out = static_cast<float>(widths[i + 1]);
    const float stddev = last ? std::sqrt(2.0f / (fan_in + fan_out)) : std::sqrt(2.0f / fan_in);
    model.teacher.layers.push_back(
        {normal_tensor({widths[i], widths[i + 1]}, stddev, rng, true), Tensor({widths[i + 1]}, 0.0f, true)});
  }
  return model;
}

Tensor encode(EncoderParams& params, const Tensor& clips, Mode mode) {
  if (clips.rank() != 5 || clips.dim(1) != kColorChannels || clips.dim(2) != kClipFrames) {
    throw DimensionError("encode: expected clips [N,3,32,H,W], got " + shape_to_string(clips.shape()));
  }
  if (clips.dim(3) < kMinSide || clips.dim(4) < kMinSide) {
    throw DimensionError("encode: frames must be at least 8x8, got " + shape_to_string(clips.shape()));
  }
  if (params.blocks.size() != kBlocks) throw DimensionError("encode: encoder must have 5 blocks");
  Tensor x = clips;
  for (auto& block : params.blocks) {
    x = conv3d(x, block.kernel, block.bias, block.options);
    if (block.norm) {
      x = batchnorm(x, block.norm->gamma, block.norm->beta, block.norm->stats, mode);
      x = relu(x);
    } else {
      x = sigmoid(x);
    }
  }
  if (x.dim(1) != kColorChannels || x.dim(2) != 1) {
    throw DimensionError("encode: encoder produced " + shape_to_string(x.shape()) + " instead of a single RGB frame");
  }
  return reshape(x, {x.dim(0), kColorChannels, x.dim(3), x.dim(4)});
}

DistilledImage encode(EncoderParams& params, const VideoClip& clip, Mode mode) {
  const auto& s = clip.frames.shape();
  if (s.size() != 4) throw DimensionError("encode: expected clip [3,T,H,W], got " + shape_to_string(s));
  Tensor batch = reshape(clip.frames, {1, s[0], s[1], s[2], s[3]});
  Tensor img = encode(params, batch, mode);
  return DistilledImage{reshape(img, {kColorChannels, s[2], s[3]})};
}

Tensor decode(DecoderParams& params, const Tensor& images, Mode mode) {
  check_image_batch(images, "decode");
  if (params.blocks.size() != kBlocks) throw DimensionError("decode: decoder must have 5 blocks");
  if (params.blocks.front().kernel.dim(0) != images.dim(1)) {
    throw DimensionError("decode: channel mismatch with " + shape_to_string(images.shape()));
  }
  Tensor x = reshape(images, {images.dim(0), images.dim(1), 1, images.dim(2), images.dim(3)});
  for (auto& block : params.blocks) {
    x = conv3d_transpose(x, block.kernel, block.bias, block.options);
    if (block.norm) {
      x = batchnorm(x, block.norm->gamma, block.norm->beta, block.norm->stats, mode);
      x = leaky_relu(x, params.leaky_slope);
    } else {
      x = sigmoid(x);
    }
  }
  return x;
}

Tensor discriminate(const TeacherParams& params, const Tensor& images) {
  check_image_batch(images, "discriminate");
  if (params.layers.empty()) throw DimensionError("discriminate: teacher has no layers");
  const std::size_t n = images.dim(0);
  const std::size_t width = images.numel() / n;
  if (params.layers.front().weight.dim(0) != width) {
    throw DimensionError("discriminate: image width " + std::to_string(width) + " does not match teacher input " +
                         std::to_string(params.layers.front().weight.dim(0)));
  }
  Tensor x = reshape(images, {n, width});
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    x = add(matmul(x, params.layers[i].weight), params.layers[i].bias);
    x = i + 1 < params.layers.size() ? relu(x) : sigmoid(x);
  }
  return reshape(x, {n});
}

float discriminate(const TeacherParams& params, const DistilledImage& image) {
  const auto& s = image.pixels.shape();
  if (s.size() != 3) throw DimensionError("discriminate: expected image [3,H,W], got " + shape_to_string(s));
  NoGradGuard guard;
  return discriminate(params, reshape(image.pixels, {1, s[0], s[1], s[2]})).item();
}

std::size_t teacher_input_width(const TeacherParams& params) {
  if (params.layers.empty()) return 0;
  return params.layers.front().weight.dim(0);
}

}  // namespace avd
