#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "avd/model.hpp"

namespace avd {

/// Binary container, little-endian:
///   "AVDC" | u32 version | u32 entry count |
///   per entry: u16 name length | name bytes (UTF-8) | u8 rank | u64 dims[rank] | f32 payload
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void save_checkpoint(const std::vector<NamedTensor>& entries, const std::filesystem::path& path);
/// Entries in file order; every tensor is returned as a fresh, trainable leaf.
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Every model tensor (including batch-norm running statistics) plus a
/// `meta.arch` entry describing the architecture.
void save_model(const AvdModel& model, const std::filesystem::path& path);
/// Rebuilds the model described by `meta.arch`; a missing, extra or
/// misshapen tensor is a format error.
AvdModel load_model(const std::filesystem::path& path);

}  // namespace avd
