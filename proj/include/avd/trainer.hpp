#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <vector>

#include "avd/data.hpp"
#include "avd/model.hpp"
#include "avd/optimizer.hpp"

namespace avd {

struct TrainConfig {
  float lambda = 0.5f;
  float lr = 3e-3f;
  float momentum = 0.9f;
  float lr_decay = 0.1f;  // multiplicative, applied once per epoch
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::size_t teacher_updates_per_batch = 1;
  /// Real frames available to the teacher; 0 picks max(10 * batch, 256)
  /// capped at the number of training frames.
  std::size_t frame_pool_size = 0;

  void validate() const;
};

struct TrainRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double recon_loss = 0.0;
  double teacher_loss = 0.0;
  double gen_loss = 0.0;
  double avd_loss = 0.0;
  double real_score = 0.0;  // mean teacher score on real frames, last teacher update
  double fake_score = 0.0;  // mean teacher score on distilled images, last teacher update
};

struct TrainLog {
  std::vector<TrainRecord> records;

  /// Header `epoch,step,recon_loss,teacher_loss,gen_loss,avd_loss,real_score,fake_score`,
  /// one row per step, numbers printed with %.6g.
  void write_csv(std::ostream& os) const;
};

/// Optimizer state for the three networks.
struct AvdOptimizers {
  SgdMomentum teacher;
  SgdMomentum encoder_decoder;

  AvdOptimizers(const AvdModel& model, float momentum);
};

/// One alternating update.
/// Phase A: `teacher_updates_per_batch` teacher steps on (real frames,
/// detached distilled images); encoder batch-norm statistics are not updated.
/// Phase B: one joint encoder/decoder step on
/// lambda * recon + (1 - lambda) * generator loss; the teacher is frozen.
/// Throws TrainingAborted when a loss is not finite.
TrainRecord train_step(AvdModel& model, AvdOptimizers& optimizers, const Tensor& clips, const FramePool& pool,
                       const TrainConfig& config, float lr, std::mt19937_64& rng);

struct TrainResult {
  AvdModel model;
  TrainLog log;
};

using EpochCallback = std::function<void(std::size_t epoch, const TrainLog& log)>;

/// epochs x ceil(clips / batch) train_steps with per-epoch lr decay and
/// seeded shuffling. `clips` are [3,32,H,W] volumes; `pool` realizes the
/// real-frame distribution.
TrainResult train(AvdModel initial, const std::vector<VideoClip>& clips, const FramePool& pool,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Convenience: init from config.seed, sample clips uniformly, build the
/// frame pool from raw training videos, then train.
TrainResult train(const VideoDataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace avd
