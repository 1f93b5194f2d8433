#pragma once

#include <filesystem>
#include <istream>
#include <string>

#include "avd/trainer.hpp"

namespace avd {

/// Settings for one training run, read from `key = value` lines.
///
/// Keys: lambda, lr, momentum, lr_decay, epochs, batch_size, seed,
/// teacher_updates, frame_pool_size, train_data, output_dir. `#` starts a
/// comment; blank lines are ignored. Unknown or repeated keys are errors.
/// Missing keys keep the TrainConfig defaults; output_dir defaults to ".".
struct RunConfig {
  TrainConfig train;
  std::filesystem::path train_data;
  std::filesystem::path output_dir = ".";
};

/// Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(std::istream& is, const std::filesystem::path& base_dir = {},
                           const std::string& source = "<config>");
/// Relative paths are resolved against the directory of `path`.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace avd
