#include "avd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "avd/errors.hpp"
#include "avd/losses.hpp"

namespace avd {

namespace {

std::vector<Tensor> encoder_decoder_params(const AvdModel& model) {
  auto named = named_tensors(model.encoder);
  for (auto& n : named_tensors(model.decoder)) named.push_back(std::move(n));
  return trainable_tensors(named);
}

double mean_of(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.data()) acc += v;
  return acc / static_cast<double>(t.numel());
}

Tensor gather(const std::vector<VideoClip>& clips, std::span<const std::size_t> idx) {
  std::vector<Tensor> items;
  items.reserve(idx.size());
  for (auto i : idx) items.push_back(clips[i].frames);
  return stack(items);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0f && lambda <= 1.0f)) throw ConfigError("lambda must lie in [0,1]");
  if (!(lr > 0.0f)) throw ConfigError("lr must be positive");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must lie in [0,1)");
  if (!(lr_decay > 0.0f)) throw ConfigError("lr_decay must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (teacher_updates_per_batch < 1) throw ConfigError("teacher_updates must be at least 1");
}

void TrainLog::write_csv(std::ostream& os) const {
  os << "epoch,step,recon_loss,teacher_loss,gen_loss,avd_loss,real_score,fake_score\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.epoch, r.step, r.recon_loss,
                  r.teacher_loss, r.gen_loss, r.avd_loss, r.real_score, r.fake_score);
    os << buf;
  }
}

AvdOptimizers::AvdOptimizers(const AvdModel& model, float momentum)
    : teacher(trainable_tensors(named_tensors(model.teacher)), momentum),
      encoder_decoder(encoder_decoder_params(model), momentum) {}

TrainRecord train_step(AvdModel& model, AvdOptimizers& optimizers, const Tensor& clips, const FramePool& pool,
                       const TrainConfig& config, float lr, std::mt19937_64& rng) {
  const std::size_t n = clips.dim(0);
  if (n == 0) throw ConfigError("train_step: empty batch");
  TrainRecord rec;

  // Phase A: teacher.
  Tensor fake;
  {
    NoGradGuard no_grad;
    fake = encode(model.encoder, clips, Mode::train_frozen);
  }
  for (std::size_t u = 0; u < config.teacher_updates_per_batch; ++u) {
    optimizers.teacher.zero_grad();
    Tensor real = pool.sample(n, rng);
    Tensor real_scores = discriminate(model.teacher, real);
    Tensor fake_scores = discriminate(model.teacher, fake);
    Tensor loss = teacher_loss(real_scores, fake_scores);
    rec.teacher_loss = loss.item();
    rec.real_score = mean_of(real_scores);
    rec.fake_score = mean_of(fake_scores);
    if (!std::isfinite(rec.teacher_loss)) throw TrainingAborted("teacher loss is not finite", -1);
    loss.backward();
    optimizers.teacher.step(lr);
  }
  optimizers.teacher.zero_grad();

  // Phase B: encoder + decoder. Teacher gradients produced here are discarded.
  optimizers.encoder_decoder.zero_grad();
  Tensor images = encode(model.encoder, clips, Mode::train);
  Tensor recon = decode(model.decoder, images, Mode::train);
  Tensor rec_loss = reconstruction_loss(clips, recon);
  Tensor gen = generator_loss(discriminate(model.teacher, images));
  Tensor total = avd_loss(rec_loss, gen, config.lambda);
  rec.recon_loss = rec_loss.item();
  rec.gen_loss = gen.item();
  rec.avd_loss = total.item();
  if (!std::isfinite(rec.recon_loss) || !std::isfinite(rec.gen_loss) || !std::isfinite(rec.avd_loss)) {
    throw TrainingAborted("encoder/decoder loss is not finite", -1);
  }
  total.backward();
  optimizers.encoder_decoder.step(lr);
  optimizers.teacher.zero_grad();
  return rec;
}

TrainResult train(AvdModel initial, const std::vector<VideoClip>& clips, const FramePool& pool,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (clips.empty()) throw ConfigError("train: dataset is empty");
  if (pool.size() == 0) throw ConfigError("train: frame pool is empty");

  TrainResult result{std::move(initial), {}};
  AvdOptimizers optimizers(result.model, config.momentum);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);

  std::size_t step = 0;
  float lr = config.lr;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      Tensor batch = gather(clips, std::span<const std::size_t>(order).subspan(begin, end - begin));
      TrainRecord rec;
      try {
        rec = train_step(result.model, optimizers, batch, pool, config, lr, rng);
      } catch (const TrainingAborted& e) {
        throw TrainingAborted(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(step),
                              static_cast<long long>(step) - 1);
      }
      rec.epoch = epoch;
      rec.step = step++;
      result.log.records.push_back(rec);
    }
    if (on_epoch) on_epoch(epoch, result.log);
    lr *= config.lr_decay;
  }
  return result;
}

TrainResult train(const VideoDataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.videos.empty()) throw ConfigError("train: dataset is empty");
  ArchConfig arch;
  arch.height = dataset.height;
  arch.width = dataset.width;
  AvdModel model = init_params(config.seed, arch);
  auto clips = sample_clips(dataset, ClipSampling::uniform);
  const std::size_t total_frames = dataset.videos.size() * dataset.frames;
  std::size_t pool_size = config.frame_pool_size;
  if (pool_size == 0) pool_size = std::min(total_frames, std::max<std::size_t>(10 * config.batch_size, 256));
  if (pool_size < 10 * config.batch_size) {
    throw ConfigError("frame pool of " + std::to_string(pool_size) + " frames is smaller than 10x the batch size");
  }
  FramePool pool = build_frame_pool(dataset.videos, pool_size, config.seed + 1, pool_size > total_frames);
  return train(std::move(model), clips, pool, config, on_epoch);
}

}  // namespace avd
