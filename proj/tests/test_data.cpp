#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "avd/data.hpp"
#include "avd/errors.hpp"
#include "support.hpp"

using namespace avd;

namespace {

SyntheticDatasetSpec small_spec(std::uint64_t seed = 7) {
  SyntheticDatasetSpec s;
  s.clips_per_class = 2;
  s.frames_per_source = 36;
  s.height = s.width = 16;
  s.shape_size_min = 3.0f;
  s.shape_size_max = 5.0f;
  s.seed = seed;
  return s;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

FormatErrorCode load_error(const std::filesystem::path& p) {
  try {
    load_dataset(p);
  } catch (const FormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no FormatError for " << p;
  return FormatErrorCode::io;
}

}  // namespace

TEST(Generate, CountsAndShapes) {
  SyntheticDatasetSpec s;
  s.clips_per_class = 16;
  s.seed = 7;
  auto ds = generate_dataset(s);
  ASSERT_EQ(ds.videos.size(), 64u);
  std::vector<int> per_class(4, 0);
  for (const auto& v : ds.videos) {
    EXPECT_EQ(v.frames.shape(), (Shape{3, 48, 32, 32}));
    ++per_class.at(v.label);
  }
  EXPECT_EQ(per_class, (std::vector<int>{16, 16, 16, 16}));
}

TEST(Generate, DeterministicAndInRange) {
  auto a = generate_dataset(small_spec());
  auto b = generate_dataset(small_spec());
  auto c = generate_dataset(small_spec(8));
  ASSERT_EQ(a.videos.size(), b.videos.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.videos.size(); ++i) {
    EXPECT_TRUE(same_bits(a.videos[i].frames, b.videos[i].frames));
    EXPECT_EQ(a.videos[i].source_id, b.videos[i].source_id);
    any_diff = any_diff || !same_bits(a.videos[i].frames, c.videos[i].frames);
    for (float v : a.videos[i].frames.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  EXPECT_TRUE(any_diff);
}

TEST(Generate, SourceIdsAreUniqueAcrossSeedsAndVariants) {
  EXPECT_EQ(make_source_id(1, 7, 3), "v1-s7-i3");
  auto a = generate_dataset(small_spec(1));
  auto b = generate_dataset(small_spec(2));
  for (const auto& x : a.videos)
    for (const auto& y : b.videos) EXPECT_NE(x.source_id, y.source_id);
}

TEST(Generate, VariantsShareLabelsButDifferInBackground) {
  auto s = small_spec();
  auto a = generate_dataset(s);
  s.variant_id = 1;
  auto b = generate_dataset(s);
  ASSERT_EQ(a.videos.size(), b.videos.size());
  for (std::size_t i = 0; i < a.videos.size(); ++i) EXPECT_EQ(a.videos[i].label, b.videos[i].label);
  EXPECT_FALSE(same_bits(a.videos[0].frames, b.videos[0].frames));
}

TEST(Generate, ClassMeansAreCloseRelativeToPixelSpread) {
  SyntheticDatasetSpec s;
  s.clips_per_class = 24;
  s.height = s.width = 16;
  s.shape_size_min = 3.0f;
  s.shape_size_max = 5.0f;
  s.noise_sigma = 0.0f;
  s.seed = 3;
  const double gap = class_appearance_gap(generate_dataset(s));
  EXPECT_LT(gap, 0.1);
}

TEST(Generate, RejectsBadSpecs) {
  auto s = small_spec();
  s.clips_per_class = 0;
  EXPECT_THROW(generate_dataset(s), ConfigError);
  s = small_spec();
  s.num_classes = 5;
  EXPECT_THROW(generate_dataset(s), ConfigError);
  s = small_spec();
  s.shape_size_max = 20.0f;
  EXPECT_THROW(generate_dataset(s), ConfigError);
}

TEST(Sampling, UniformIndices) {
  auto id = clip_indices(32, 32, ClipSampling::uniform);
  for (std::size_t k = 0; k < 32; ++k) EXPECT_EQ(id[k], k);
  auto idx = clip_indices(48, 32, ClipSampling::uniform);
  for (std::size_t k = 0; k < 32; ++k) EXPECT_EQ(idx[k], static_cast<std::size_t>(std::floor(k * 47.0 / 31.0 + 0.5)));
}

TEST(Sampling, RandomWindowIsContiguousAndSeeded) {
  auto a = clip_indices(48, 32, ClipSampling::random_window, 5);
  auto b = clip_indices(48, 32, ClipSampling::random_window, 5);
  EXPECT_EQ(a, b);
  EXPECT_LE(a.back(), 47u);
  for (std::size_t k = 1; k < a.size(); ++k) EXPECT_EQ(a[k], a[k - 1] + 1);
  EXPECT_THROW(clip_indices(16, 32, ClipSampling::random_window, 0), DimensionError);
}

TEST(Sampling, ClipsCarryLabelsAndIds) {
  auto ds = generate_dataset(small_spec());
  auto clips = sample_clips(ds);
  ASSERT_EQ(clips.size(), ds.videos.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    EXPECT_EQ(clips[i].frames.shape(), (Shape{3, 32, 16, 16}));
    EXPECT_EQ(clips[i].label, ds.videos[i].label);
    EXPECT_EQ(clips[i].source_id, ds.videos[i].source_id);
  }
}

TEST(FramePoolTest, ConstantVideoGivesIdenticalEntries) {
  std::vector<LabeledVideo> videos{{Tensor({3, 5, 8, 8}, 0.25f), 0, "a"}};
  auto pool = build_frame_pool(videos, 4, 1);
  EXPECT_EQ(pool.size(), 4u);
  for (float v : pool.frames.data()) EXPECT_EQ(v, 0.25f);
  EXPECT_THROW(build_frame_pool(videos, 6, 1), ConfigError);
  EXPECT_EQ(build_frame_pool(videos, 6, 1, true).size(), 6u);
}

TEST(FramePoolTest, SeededAndInRange) {
  auto ds = generate_dataset(small_spec());
  auto a = build_frame_pool(ds.videos, 40, 3);
  auto b = build_frame_pool(ds.videos, 40, 3);
  EXPECT_TRUE(same_bits(a.frames, b.frames));
  for (float v : a.frames.data()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  std::mt19937_64 rng(1);
  EXPECT_EQ(a.sample(5, rng).shape(), (Shape{5, 3, 16, 16}));
}

TEST(Augment, FlipIsAnInvolutionAndSwapsLeftRight) {
  std::mt19937_64 rng(4);
  VideoClip clip{testkit::random_tensor({3, 4, 5, 6}, rng, 0.0f, 1.0f), kLeft, "c"};
  AugmentFlags force{true, true};
  auto once = augment(clip, force, 0);
  EXPECT_EQ(once.label, kRight);
  EXPECT_EQ(once.frames.data()[0], clip.frames.data()[5]);
  auto twice = augment(once, force, 0);
  EXPECT_TRUE(same_bits(twice.frames, clip.frames));
  EXPECT_EQ(twice.label, kLeft);

  VideoClip up{clip.frames, kUp, "u"};
  EXPECT_EQ(augment(up, force, 0).label, kUp);
  for (std::uint64_t s = 0; s < 8; ++s) EXPECT_EQ(augment(clip, {}, s).label, augment(clip, {}, s).label);
}

TEST(DatasetFile, RoundTripIsBitExact) {
  auto dir = testkit::scratch_dir("dataset_roundtrip");
  auto ds = generate_dataset(small_spec());
  save_dataset(ds, dir / "a.avdd");
  auto back = load_dataset(dir / "a.avdd");
  EXPECT_EQ(back.num_classes, ds.num_classes);
  EXPECT_EQ(back.seed, ds.seed);
  EXPECT_EQ(back.variant_id, ds.variant_id);
  ASSERT_EQ(back.videos.size(), ds.videos.size());
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    EXPECT_EQ(back.videos[i].label, ds.videos[i].label);
    EXPECT_EQ(back.videos[i].source_id, ds.videos[i].source_id);
    EXPECT_TRUE(same_bits(back.videos[i].frames, ds.videos[i].frames));
  }
  save_dataset(back, dir / "b.avdd");
  EXPECT_EQ(testkit::read_bytes(dir / "a.avdd"), testkit::read_bytes(dir / "b.avdd"));
}

TEST(DatasetFile, EmptyDatasetRoundTrips) {
  auto dir = testkit::scratch_dir("dataset_empty");
  VideoDataset ds;
  ds.num_classes = 4;
  ds.frames = 48;
  ds.height = ds.width = 16;
  save_dataset(ds, dir / "e.avdd");
  auto back = load_dataset(dir / "e.avdd");
  EXPECT_TRUE(back.videos.empty());
  EXPECT_EQ(back.frames, 48u);
}

TEST(DatasetFile, CorruptionsHaveDistinctCodes) {
  auto dir = testkit::scratch_dir("dataset_corrupt");
  save_dataset(generate_dataset(small_spec()), dir / "ok.avdd");
  const std::string bytes = testkit::read_bytes(dir / "ok.avdd");
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  std::string magic = bytes;
  magic[0] = 'X';
  std::string version = bytes;
  version[4] = 9;
  EXPECT_EQ(load_error(write("magic.avdd", magic)), FormatErrorCode::bad_magic);
  EXPECT_EQ(load_error(write("version.avdd", version)), FormatErrorCode::version_mismatch);
  EXPECT_EQ(load_error(write("trunc.avdd", bytes.substr(0, bytes.size() - 7))), FormatErrorCode::truncated);
  EXPECT_EQ(load_error(write("header.avdd", bytes.substr(0, 10))), FormatErrorCode::truncated);
  EXPECT_EQ(load_error(dir / "missing.avdd"), FormatErrorCode::io);
}
