#include "avd/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "avd/errors.hpp"
#include "binary_io.hpp"

namespace avd {

namespace {

using Color = std::array<float, 3>;

// Position inside [0, range] for a point travelling along a line with
// reflective walls.
float reflect(float p, float range) {
  if (range <= 0.0f) return 0.0f;
  float m = std::fmod(p, 2.0f * range);
  if (m < 0.0f) m += 2.0f * range;
  return m <= range ? m : 2.0f * range - m;
}

std::mt19937_64 clip_stream(std::uint64_t seed, std::uint32_t variant, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), variant,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

Color random_color(std::mt19937_64& rng, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  Color c;
  for (auto& v : c) v = u(rng);
  return c;
}

float l1(const Color& a, const Color& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

// Background texture [3, H, W] for one clip.
std::vector<float> make_background(std::uint32_t variant, std::size_t h, std::size_t w, const Color& c1,
                                   const Color& c2, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::vector<float> bg(3 * h * w);
  const float angle = unit(rng) * 2.0f * std::numbers::pi_v<float>;
  const float ca = std::cos(angle), sa = std::sin(angle);
  const int cell = 3 + static_cast<int>(unit(rng) * 4.0f);  // 3..6
  const float period = 4.0f + unit(rng) * 6.0f;
  const float phase_x = unit(rng) * 8.0f, phase_y = unit(rng) * 8.0f;
  const float diag = std::sqrt(static_cast<float>(h * h + w * w));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const float fx = static_cast<float>(x) + 0.5f, fy = static_cast<float>(y) + 0.5f;
      float t = 0.0f;
      switch (variant % 3) {
        case 0:
          t = std::clamp(((fx - 0.5f * static_cast<float>(w)) * ca + (fy - 0.5f * static_cast<float>(h)) * sa) /
                                 diag +
                             0.5f,
                         0.0f, 1.0f);
          break;
        case 1: {
          const int cx = static_cast<int>(std::floor((fx + phase_x) / static_cast<float>(cell)));
          const int cy = static_cast<int>(std::floor((fy + phase_y) / static_cast<float>(cell)));
          t = ((cx + cy) & 1) ? 1.0f : 0.0f;
          break;
        }
        default:
          t = 0.5f + 0.5f * std::sin(2.0f * std::numbers::pi_v<float> * (fx * ca + fy * sa) / period + phase_x);
          break;
      }
      for (std::size_t c = 0; c < 3; ++c) bg[(c * h + y) * w + x] = (1.0f - t) * c1[c] + t * c2[c];
    }
  }
  return bg;
}

float square_coverage(float px, float py, float cx, float cy, float half) {
  const float ox = std::min(px + 1.0f, cx + half) - std::max(px, cx - half);
  const float oy = std::min(py + 1.0f, cy + half) - std::max(py, cy - half);
  return std::clamp(ox, 0.0f, 1.0f) * std::clamp(oy, 0.0f, 1.0f);
}

float disc_coverage(float px, float py, float cx, float cy, float radius) {
  const float dx = px + 0.5f - cx, dy = py + 0.5f - cy;
  return std::clamp(radius + 0.5f - std::sqrt(dx * dx + dy * dy), 0.0f, 1.0f);
}

LabeledVideo generate_video(const SyntheticDatasetSpec& spec, std::size_t index) {
  auto rng = clip_stream(spec.seed, spec.variant_id, index);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  const std::size_t h = spec.height, w = spec.width, frames = spec.frames_per_source;
  const auto label = static_cast<std::uint32_t>(index % spec.num_classes);

  // Appearance: drawn before and independently of the label.
  const Color bg1 = random_color(rng, 0.2f, 0.8f);
  const Color bg2 = random_color(rng, 0.2f, 0.8f);
  Color fg = random_color(rng, 0.0f, 1.0f);
  for (int tries = 0; tries < 64 && (l1(fg, bg1) < 0.6f || l1(fg, bg2) < 0.6f); ++tries) {
    fg = random_color(rng, 0.0f, 1.0f);
  }
  const ShapeKind kind = spec.shape_kinds[static_cast<std::size_t>(unit(rng) * static_cast<float>(spec.shape_kinds.size())) %
                                          spec.shape_kinds.size()];
  const float size = spec.shape_size_min + unit(rng) * (spec.shape_size_max - spec.shape_size_min);
  const float speed = spec.speed_min + unit(rng) * (spec.speed_max - spec.speed_min);
  const auto background = make_background(spec.variant_id, h, w, bg1, bg2, rng);

  // Motion along one axis. When the whole trajectory fits, the start is
  // drawn so no wall is hit and the cross-axis offset is drawn from the same
  // (trapezoidal) law the moving coordinate has at a random frame, which
  // makes single frames uninformative about the label.
  const bool vertical = label == kUp || label == kDown;
  const bool negative = label == kUp || label == kLeft;
  const float motion_extent = static_cast<float>(vertical ? h : w) - size;
  const float cross_extent = static_cast<float>(vertical ? w : h) - size;
  const float travel = speed * static_cast<float>(frames - 1);
  float start, cross;
  if (travel <= motion_extent && travel <= cross_extent) {
    start = unit(rng) * (motion_extent - travel);
    cross = unit(rng) * (cross_extent - travel) + unit(rng) * travel;
  } else {
    start = unit(rng) * motion_extent;
    cross = unit(rng) * cross_extent;
  }

  std::normal_distribution<float> noise(0.0f, spec.noise_sigma);
  const float half = 0.5f * size;
  Tensor video({3, frames, h, w});
  auto out = video.data();
  for (std::size_t f = 0; f < frames; ++f) {
    const float along = reflect(start + speed * static_cast<float>(f), motion_extent);
    const float m = half + (negative ? motion_extent - along : along);
    const float cx = vertical ? half + cross : m;
    const float cy = vertical ? m : half + cross;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const float px = static_cast<float>(x), py = static_cast<float>(y);
        const float cov = kind == ShapeKind::square ? square_coverage(px, py, cx, cy, half)
                                                    : disc_coverage(px, py, cx, cy, half);
        for (std::size_t c = 0; c < 3; ++c) {
          const float base = (1.0f - cov) * background[(c * h + y) * w + x] + cov * fg[c];
          const float v = spec.noise_sigma > 0.0f ? base + noise(rng) : base;
          out[((c * frames + f) * h + y) * w + x] = std::clamp(v, 0.0f, 1.0f);
        }
      }
    }
  }
  return LabeledVideo{std::move(video), label, make_source_id(spec.variant_id, spec.seed, index)};
}

}  // namespace

void SyntheticDatasetSpec::validate() const {
  if (num_classes < 1 || num_classes > 4) throw ConfigError("num_classes must be between 1 and 4");
  if (clips_per_class == 0) throw ConfigError("clips_per_class must be positive");
  if (frames_per_source == 0) throw ConfigError("frames_per_source must be positive");
  if (shape_kinds.empty()) throw ConfigError("at least one shape kind is required");
  if (!(shape_size_min > 0.0f) || shape_size_max < shape_size_min) throw ConfigError("invalid shape size range");
  if (shape_size_max >= static_cast<float>(std::min(height, width))) {
    throw ConfigError("shape larger than frame: size " + std::to_string(shape_size_max) + " vs frame " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  if (speed_min < 0.0f || speed_max < speed_min) throw ConfigError("invalid speed range");
  if (noise_sigma < 0.0f) throw ConfigError("noise sigma must be non-negative");
}

std::string make_source_id(std::uint32_t variant, std::uint64_t seed, std::size_t index) {
  return "v" + std::to_string(variant) + "-s" + std::to_string(seed) + "-i" + std::to_string(index);
}

VideoDataset generate_dataset(const SyntheticDatasetSpec& spec) {
  spec.validate();
  VideoDataset ds;
  ds.num_classes = spec.num_classes;
  ds.variant_id = spec.variant_id;
  ds.seed = spec.seed;
  ds.frames = spec.frames_per_source;
  ds.height = spec.height;
  ds.width = spec.width;
  const std::size_t total = static_cast<std::size_t>(spec.num_classes) * spec.clips_per_class;
  ds.videos.reserve(total);
  for (std::size_t i = 0; i < total; ++i) ds.videos.push_back(generate_video(spec, i));
  return ds;
}

double class_appearance_gap(const VideoDataset& dataset) {
  const std::size_t plane = 3 * dataset.height * dataset.width;
  std::vector<std::vector<double>> means(dataset.num_classes, std::vector<double>(plane, 0.0));
  std::vector<std::size_t> counts(dataset.num_classes, 0);
  for (const auto& v : dataset.videos) {
    auto px = v.frames.data();
    const std::size_t hw = dataset.height * dataset.width;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t f = 0; f < dataset.frames; ++f) {
        const float* src = px.data() + (c * dataset.frames + f) * hw;
        for (std::size_t i = 0; i < hw; ++i) means[v.label][c * hw + i] += src[i];
      }
    }
    counts[v.label] += dataset.frames;
  }
  double gap = 0.0;
  for (std::size_t a = 0; a < means.size(); ++a) {
    for (std::size_t b = a + 1; b < means.size(); ++b) {
      if (!counts[a] || !counts[b]) continue;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = means[a][i] / static_cast<double>(counts[a]) - means[b][i] / static_cast<double>(counts[b]);
        acc += d * d;
      }
      gap = std::max(gap, std::sqrt(acc / static_cast<double>(plane)));
    }
  }
  return gap;
}

std::vector<std::size_t> clip_indices(std::size_t source_frames, std::size_t frames, ClipSampling mode,
                                      std::uint64_t seed) {
  if (source_frames == 0) throw DimensionError("sample_clip: empty video");
  if (frames == 0) throw DimensionError("sample_clip: clip length must be positive");
  std::vector<std::size_t> idx(frames);
  if (mode == ClipSampling::uniform) {
    if (frames == 1) return {0};
    for (std::size_t k = 0; k < frames; ++k) {
      // Integer round-half-up of k * (F - 1) / (T - 1).
      const std::size_t num = k * (source_frames - 1);
      const std::size_t den = frames - 1;
      idx[k] = (2 * num + den) / (2 * den);
    }
    return idx;
  }
  if (source_frames < frames) {
    throw DimensionError("sample_clip: random window needs at least " + std::to_string(frames) + " frames, got " +
                         std::to_string(source_frames));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, source_frames - frames);
  const std::size_t start = pick(rng);
  std::iota(idx.begin(), idx.end(), start);
  return idx;
}

VideoClip sample_clip(const Tensor& video, std::size_t frames, ClipSampling mode, std::uint64_t seed) {
  if (video.rank() != 4 || video.dim(0) != 3) {
    throw DimensionError("sample_clip: expected video [3,F,H,W], got " + shape_to_string(video.shape()));
  }
  const std::size_t f = video.dim(1), h = video.dim(2), w = video.dim(3), hw = h * w;
  const auto idx = clip_indices(f, frames, mode, seed);
  Tensor clip({3, frames, h, w});
  auto src = video.data();
  auto dst = clip.data();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < frames; ++k) {
      const float* s = src.data() + (c * f + idx[k]) * hw;
      std::copy(s, s + hw, dst.data() + (c * frames + k) * hw);
    }
  }
  return VideoClip{std::move(clip), std::nullopt, {}};
}

std::vector<VideoClip> sample_clips(const VideoDataset& dataset, ClipSampling mode, std::uint64_t seed) {
  std::vector<VideoClip> clips;
  clips.reserve(dataset.videos.size());
  for (std::size_t i = 0; i < dataset.videos.size(); ++i) {
    const auto& v = dataset.videos[i];
    auto clip = sample_clip(v.frames, kClipFrames, mode, seed + i);
    clip.label = v.label;
    clip.source_id = v.source_id;
    clips.push_back(std::move(clip));
  }
  return clips;
}

Tensor FramePool::sample(std::size_t count, std::mt19937_64& rng) const {
  if (size() == 0) throw DimensionError("frame pool is empty");
  std::uniform_int_distribution<std::size_t> pick(0, size() - 1);
  const std::size_t plane = frames.numel() / size();
  std::vector<float> out(count * plane);
  auto src = frames.data();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = pick(rng);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(j * plane),
              src.begin() + static_cast<std::ptrdiff_t>((j + 1) * plane), out.begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  return Tensor({count, frames.dim(1), frames.dim(2), frames.dim(3)}, std::move(out));
}

FramePool build_frame_pool(std::span<const LabeledVideo> videos, std::size_t pool_size, std::uint64_t seed,
                           bool with_replacement) {
  if (videos.empty()) throw ConfigError("frame pool: no videos");
  if (pool_size == 0) throw ConfigError("frame pool: size must be positive");
  const auto& first = videos.front().frames.shape();
  const std::size_t h = first[2], w = first[3], hw = h * w;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const auto& s = videos[v].frames.shape();
    if (s[2] != h || s[3] != w) throw DimensionError("frame pool: videos have different frame sizes");
    for (std::size_t f = 0; f < s[1]; ++f) pairs.emplace_back(v, f);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  chosen.reserve(pool_size);
  if (with_replacement) {
    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
    for (std::size_t i = 0; i < pool_size; ++i) chosen.push_back(pairs[pick(rng)]);
  } else {
    if (pool_size > pairs.size()) {
      throw ConfigError("frame pool: " + std::to_string(pool_size) + " frames requested but only " +
                        std::to_string(pairs.size()) + " available without replacement");
    }
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < pool_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pairs.size() - 1);
      std::swap(pairs[i], pairs[pick(rng)]);
      chosen.push_back(pairs[i]);
    }
  }
  Tensor pool({pool_size, 3, h, w});
  auto dst = pool.data();
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto& [v, f] = chosen[i];
    const std::size_t frames = videos[v].frames.dim(1);
    auto src = videos[v].frames.data();
    for (std::size_t c = 0; c < 3; ++c) {
      const float* s = src.data() + (c * frames + f) * hw;
      std::copy(s, s + hw, dst.data() + (i * 3 + c) * hw);
    }
  }
  return FramePool{std::move(pool)};
}

VideoClip augment(const VideoClip& clip, const AugmentFlags& flags, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const bool flip = flags.hflip && (flags.force || std::bernoulli_distribution(0.5)(rng));
  VideoClip out{clip.frames.clone(), clip.label, clip.source_id};
  if (!flip) return out;
  const std::size_t w = clip.frames.shape().back();
  auto px = out.frames.data();
  for (std::size_t row = 0; row < px.size() / w; ++row) std::reverse(px.begin() + static_cast<std::ptrdiff_t>(row * w),
                                                                     px.begin() + static_cast<std::ptrdiff_t>((row + 1) * w));
  if (out.label == kLeft) {
    out.label = kRight;
  } else if (out.label == kRight) {
    out.label = kLeft;
  }
  return out;
}

void save_dataset(const VideoDataset& dataset, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(FormatErrorCode::io, "cannot open " + path.string() + " for writing");
  os.write("AVDD", 4);
  io::write_le<std::uint32_t>(os, kDatasetFormatVersion);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.videos.size()));
  io::write_le<std::uint32_t>(os, 3);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.frames));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.height));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.width));
  io::write_le<std::uint32_t>(os, dataset.num_classes);
  io::write_le<std::uint32_t>(os, dataset.variant_id);
  io::write_le<std::uint64_t>(os, dataset.seed);
  const Shape expected{3, dataset.frames, dataset.height, dataset.width};
  for (const auto& v : dataset.videos) io::write_le<std::uint32_t>(os, v.label);
  for (const auto& v : dataset.videos) {
    if (v.frames.shape() != expected) {
      throw DimensionError("save_dataset: video shape " + shape_to_string(v.frames.shape()) + " differs from header " +
                           shape_to_string(expected));
    }
    io::write_f32s(os, v.frames.data());
  }
  if (!os) throw FormatError(FormatErrorCode::io, "write failed for " + path.string());
}

VideoDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatErrorCode::io, "cannot open " + path.string());
  io::expect_magic(is, "AVDD");
  const auto version = io::read_le<std::uint32_t>(is, "version");
  if (version != kDatasetFormatVersion) {
    throw FormatError(FormatErrorCode::version_mismatch,
                      "unsupported dataset version " + std::to_string(version) + " in " + path.string());
  }
  VideoDataset ds;
  const auto clips = io::read_le<std::uint32_t>(is, "clip count");
  const auto channels = io::read_le<std::uint32_t>(is, "channels");
  ds.frames = io::read_le<std::uint32_t>(is, "frames");
  ds.height = io::read_le<std::uint32_t>(is, "height");
  ds.width = io::read_le<std::uint32_t>(is, "width");
  ds.num_classes = io::read_le<std::uint32_t>(is, "class count");
  ds.variant_id = io::read_le<std::uint32_t>(is, "variant");
  ds.seed = io::read_le<std::uint64_t>(is, "seed");
  if (channels != 3 || ds.frames == 0 || ds.height == 0 || ds.width == 0) {
    throw FormatError(FormatErrorCode::malformed, "invalid dataset dimensions in " + path.string());
  }
  std::vector<std::uint32_t> labels(clips);
  for (auto& l : labels) {
    l = io::read_le<std::uint32_t>(is, "labels");
    if (l >= ds.num_classes) throw FormatError(FormatErrorCode::malformed, "label out of range in " + path.string());
  }
  ds.videos.reserve(clips);
  for (std::uint32_t i = 0; i < clips; ++i) {
    Tensor frames({3, ds.frames, ds.height, ds.width});
    io::read_f32s(is, frames.data(), "pixel payload");
    ds.videos.push_back(LabeledVideo{std::move(frames), labels[i], make_source_id(ds.variant_id, ds.seed, i)});
  }
  return ds;
}

}  // namespace avd
