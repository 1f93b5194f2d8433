#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "avd/video.hpp"

namespace avd {

enum class ShapeKind : std::uint8_t { square, disc };

/// Class ids of the motion-direction benchmark.
enum MotionClass : std::uint32_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

/// Parameters of the synthetic moving-shape benchmark. Class labels depend
/// only on the direction of motion; shape, colour, size, start position and
/// background are drawn independently of the label.
struct SyntheticDatasetSpec {
  std::uint32_t num_classes = 4;
  std::size_t clips_per_class = 16;
  std::size_t frames_per_source = 48;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<ShapeKind> shape_kinds{ShapeKind::square, ShapeKind::disc};
  float shape_size_min = 6.0f;  // pixels
  float shape_size_max = 9.0f;
  float speed_min = 0.25f;  // pixels per frame
  float speed_max = 0.45f;
  float noise_sigma = 0.05f;
  std::uint64_t seed = 0;
  /// Selects the background texture family: 0 smooth gradients, 1 checkerboards,
  /// 2 stripes (higher ids cycle).
  std::uint32_t variant_id = 0;

  void validate() const;
};

struct LabeledVideo {
  Tensor frames;  // [3, F, H, W]
  std::uint32_t label = 0;
  std::string source_id;
};

struct VideoDataset {
  std::uint32_t num_classes = 0;
  std::uint32_t variant_id = 0;
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<LabeledVideo> videos;
};

std::string make_source_id(std::uint32_t variant, std::uint64_t seed, std::size_t index);

/// Deterministic in `spec.seed`; each clip draws from its own stream
/// derived from (seed, variant, clip index).
VideoDataset generate_dataset(const SyntheticDatasetSpec& spec);

/// Largest RMS distance between per-class mean frames (averaged over every
/// frame of every clip of that class).
double class_appearance_gap(const VideoDataset& dataset);

enum class ClipSampling { uniform, random_window };

/// Frame indices selected from a source of `source_frames` frames.
/// uniform: round(k * (F - 1) / (T - 1)); random_window: a contiguous window
/// with a start drawn from `seed`.
std::vector<std::size_t> clip_indices(std::size_t source_frames, std::size_t frames, ClipSampling mode,
                                      std::uint64_t seed = 0);

/// Samples a [3, T, H, W] clip from a [3, F, H, W] source video.
VideoClip sample_clip(const Tensor& video, std::size_t frames = kClipFrames, ClipSampling mode = ClipSampling::uniform,
                      std::uint64_t seed = 0);

/// Samples one clip per video, carrying labels and source ids along.
std::vector<VideoClip> sample_clips(const VideoDataset& dataset, ClipSampling mode = ClipSampling::uniform,
                                    std::uint64_t seed = 0);

/// Real frames available to the teacher.
struct FramePool {
  Tensor frames;  // [P, 3, H, W]

  std::size_t size() const { return frames.defined() ? frames.dim(0) : 0; }
  /// Draws `count` pool entries uniformly with replacement.
  Tensor sample(std::size_t count, std::mt19937_64& rng) const;
};

/// Uniform sample over (video, frame) pairs. Without replacement unless
/// `with_replacement`; requesting more frames than exist without
/// replacement is an error.
FramePool build_frame_pool(std::span<const LabeledVideo> videos, std::size_t pool_size, std::uint64_t seed,
                           bool with_replacement = false);

struct AugmentFlags {
  bool hflip = true;
  /// Apply every enabled transform instead of flipping a coin.
  bool force = false;
};

/// Horizontal flip with probability 1/2 (or always when forced). Flipping
/// swaps the left/right motion labels.
VideoClip augment(const VideoClip& clip, const AugmentFlags& flags, std::uint64_t seed);

/// Binary container, little-endian:
///   "AVDD" | u32 version | u32 clips | u32 channels | u32 frames | u32 height |
///   u32 width | u32 num_classes | u32 variant | u64 seed |
///   u32 label[clips] | f32 pixels[clips * 3 * frames * height * width]
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void save_dataset(const VideoDataset& dataset, const std::filesystem::path& path);
VideoDataset load_dataset(const std::filesystem::path& path);

}  // namespace avd
