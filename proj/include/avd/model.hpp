#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avd/ops.hpp"
#include "avd/video.hpp"

namespace avd {

/// Shape parameters of the encoder/decoder/teacher triple.
struct ArchConfig {
  std::size_t frames = kClipFrames;
  std::size_t height = 32;
  std::size_t width = 32;
  /// Encoder widths per block boundary; the decoder runs them in reverse.
  std::array<std::size_t, 6> channels{3, 16, 32, 32, 16, 3};
  std::array<std::size_t, 4> teacher_hidden{256, 128, 64, 32};
  float leaky_slope = 0.2f;

  void validate() const;
};

struct NormParams {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
};

struct ConvLayer {
  Tensor kernel;
  Tensor bias;
  Conv3dOptions options;
  std::optional<NormParams> norm;
};

/// Fully connected layer computing x * weight + bias, weight [in, out].
struct DenseLayer {
  Tensor weight;
  Tensor bias;
};

struct EncoderParams {
  std::vector<ConvLayer> blocks;
};

struct DecoderParams {
  std::vector<ConvLayer> blocks;
  float leaky_slope = 0.2f;
};

struct TeacherParams {
  std::vector<DenseLayer> layers;
};

struct AvdModel {
  ArchConfig arch;
  EncoderParams encoder;
  DecoderParams decoder;
  TeacherParams teacher;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

std::vector<NamedTensor> named_tensors(const EncoderParams& params, const std::string& prefix = "encoder");
std::vector<NamedTensor> named_tensors(const DecoderParams& params, const std::string& prefix = "decoder");
std::vector<NamedTensor> named_tensors(const TeacherParams& params, const std::string& prefix = "teacher");
std::vector<NamedTensor> named_tensors(const AvdModel& model);

/// Trainable tensors only (weights, biases, batch-norm gamma/beta).
std::vector<Tensor> trainable_tensors(const std::vector<NamedTensor>& named);

/// FNV-1a over names, shapes and raw bytes of every tensor.
std::uint64_t checksum(const std::vector<NamedTensor>& named);

/// Deterministic initialization: He-normal for layers followed by (leaky)
/// ReLU, Xavier-normal for layers followed by a sigmoid, zero biases,
/// gamma = 1, beta = 0, running mean 0 and variance 1.
AvdModel init_params(std::uint64_t seed, const ArchConfig& arch = {});

/// [N,3,T,H,W] -> [N,3,H,W]. Temporal extent halves per block; spatial
/// extent is preserved; the last block ends in a sigmoid.
Tensor encode(EncoderParams& params, const Tensor& clips, Mode mode);
DistilledImage encode(EncoderParams& params, const VideoClip& clip, Mode mode);

/// [N,3,H,W] -> [N,3,T,H,W], mirroring the encoder with transposed
/// convolutions and leaky ReLUs.
Tensor decode(DecoderParams& params, const Tensor& images, Mode mode);

/// [N,3,H,W] -> [N] probabilities that each image is a real frame.
Tensor discriminate(const TeacherParams& params, const Tensor& images);
float discriminate(const TeacherParams& params, const DistilledImage& image);

/// Image height/width the encoder expects, derived from the teacher input.
std::size_t teacher_input_width(const TeacherParams& params);

}  // namespace avd
