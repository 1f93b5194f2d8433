#include "avd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "avd/errors.hpp"
#include "avd/ops.hpp"

namespace avd {

namespace {

constexpr float kHigh = 1.0f - kLogEpsilon;

bool inside(float s) { return s > kLogEpsilon && s < kHigh; }

void check_scores(const Tensor& t, const char* what) {
  if (t.numel() == 0) throw DimensionError(std::string(what) + " is empty");
}

}  // namespace

Tensor reconstruction_loss(const Tensor& clips, const Tensor& reconstructions) {
  if (clips.shape() != reconstructions.shape()) {
    throw DimensionError("reconstruction_loss: shape mismatch " + shape_to_string(clips.shape()) + " vs " +
                         shape_to_string(reconstructions.shape()));
  }
  return mean(square(sub(reconstructions, clips)));
}

Tensor teacher_loss(const Tensor& real_scores, const Tensor& fake_scores) {
  check_scores(real_scores, "real scores");
  check_scores(fake_scores, "fake scores");
  auto r = real_scores.data();
  auto f = fake_scores.data();
  double real_term = 0.0, fake_term = 0.0;
  for (float s : r) real_term -= std::log(static_cast<double>(std::clamp(s, kLogEpsilon, kHigh)));
  for (float s : f) fake_term -= std::log(1.0 - static_cast<double>(std::clamp(s, kLogEpsilon, kHigh)));
  const double nr = static_cast<double>(r.size()), nf = static_cast<double>(f.size());
  const auto value = static_cast<float>(real_term / nr + fake_term / nf);
  return record_op("teacher_loss", {1}, {value}, {real_scores, fake_scores},
                   [real_scores, fake_scores](std::span<const float> g) {
                     if (real_scores.requires_grad()) {
                       auto x = real_scores.data();
                       auto gr = real_scores.mutable_grad();
                       const float n = static_cast<float>(x.size());
                       for (std::size_t i = 0; i < x.size(); ++i) {
                         if (inside(x[i])) gr[i] -= g[0] / (n * x[i]);
                       }
                     }
                     if (fake_scores.requires_grad()) {
                       auto x = fake_scores.data();
                       auto gf = fake_scores.mutable_grad();
                       const float n = static_cast<float>(x.size());
                       for (std::size_t i = 0; i < x.size(); ++i) {
                         if (inside(x[i])) gf[i] += g[0] / (n * (1.0f - x[i]));
                       }
                     }
                   });
}

Tensor generator_loss(const Tensor& fake_scores) {
  check_scores(fake_scores, "fake scores");
  auto f = fake_scores.data();
  double acc = 0.0;
  for (float s : f) acc -= std::log(static_cast<double>(std::clamp(s, kLogEpsilon, kHigh)));
  const auto value = static_cast<float>(acc / static_cast<double>(f.size()));
  return record_op("generator_loss", {1}, {value}, {fake_scores}, [fake_scores](std::span<const float> g) {
    auto x = fake_scores.data();
    auto gf = fake_scores.mutable_grad();
    const float n = static_cast<float>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (inside(x[i])) gf[i] -= g[0] / (n * x[i]);
    }
  });
}

Tensor avd_loss(const Tensor& recon, const Tensor& gen, float lambda) {
  if (!(lambda >= 0.0f && lambda <= 1.0f)) throw ConfigError("lambda must lie in [0,1]");
  if (recon.numel() != 1 || gen.numel() != 1) throw DimensionError("avd_loss expects scalar losses");
  return add(scale(recon, lambda), scale(gen, 1.0f - lambda));
}

}  // namespace avd
