#include "avd/checkpoint.hpp"

#include <fstream>
#include <limits>
#include <map>

#include "avd/errors.hpp"
#include "binary_io.hpp"

namespace avd {

namespace {

constexpr const char* kArchEntry = "meta.arch";

Tensor arch_tensor(const ArchConfig& a) {
  std::vector<float> v{static_cast<float>(a.frames), static_cast<float>(a.height), static_cast<float>(a.width)};
  for (auto c : a.channels) v.push_back(static_cast<float>(c));
  for (auto w : a.teacher_hidden) v.push_back(static_cast<float>(w));
  v.push_back(a.leaky_slope);
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

ArchConfig arch_from_tensor(const Tensor& t) {
  ArchConfig a;
  const std::size_t expected = 3 + a.channels.size() + a.teacher_hidden.size() + 1;
  if (t.rank() != 1 || t.numel() != expected) {
    throw FormatError(FormatErrorCode::malformed, "meta.arch has shape " + shape_to_string(t.shape()));
  }
  auto d = t.data();
  auto count = [&](std::size_t i) {
    const float v = d[i];
    if (!(v >= 0.0f && v < 1e9f) || v != static_cast<float>(static_cast<std::size_t>(v))) {
      throw FormatError(FormatErrorCode::malformed, "meta.arch holds a non-integral size");
    }
    return static_cast<std::size_t>(v);
  };
  std::size_t i = 0;
  a.frames = count(i++);
  a.height = count(i++);
  a.width = count(i++);
  for (auto& c : a.channels) c = count(i++);
  for (auto& w : a.teacher_hidden) w = count(i++);
  a.leaky_slope = d[i];
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrorCode::malformed, std::string("meta.arch: ") + e.what());
  }
  return a;
}

}  // namespace

void save_checkpoint(const std::vector<NamedTensor>& entries, const std::filesystem::path& path) {
  if (entries.size() > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("too many checkpoint entries");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(FormatErrorCode::io, "cannot open " + path.string() + " for writing");
  os.write("AVDC", 4);
  io::write_le<std::uint32_t>(os, kCheckpointFormatVersion);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ConfigError("checkpoint entry name must have 1..65535 bytes");
    }
    if (e.tensor.rank() > std::numeric_limits<std::uint8_t>::max()) throw ConfigError("tensor rank too large");
    io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) io::write_le<std::uint64_t>(os, d);
    io::write_f32s(os, e.tensor.data());
  }
  if (!os) throw FormatError(FormatErrorCode::io, "write failed for " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatErrorCode::io, "cannot open " + path.string());
  io::expect_magic(is, "AVDC");
  const auto version = io::read_le<std::uint32_t>(is, "version");
  if (version != kCheckpointFormatVersion) {
    throw FormatError(FormatErrorCode::version_mismatch,
                      "unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  const auto count = io::read_le<std::uint32_t>(is, "entry count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = io::read_le<std::uint16_t>(is, "entry name length");
    std::string name(len, '\0');
    io::read_exact(is, name.data(), len, "entry name");
    const auto rank = io::read_le<std::uint8_t>(is, "rank of " + name);
    if (rank == 0) throw FormatError(FormatErrorCode::malformed, "entry " + name + " has rank 0");
    Shape shape(rank);
    // Cap element counts so a corrupted header cannot request absurd allocations.
    constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      const auto dim = io::read_le<std::uint64_t>(is, "dims of " + name);
      if (dim == 0 || dim > kMaxElements || numel * dim > kMaxElements) {
        throw FormatError(FormatErrorCode::malformed, "entry " + name + " has invalid dims");
      }
      numel *= dim;
      d = static_cast<std::size_t>(dim);
    }
    Tensor t(std::move(shape), 0.0f, true);
    io::read_f32s(is, t.data(), "payload of " + name);
    out.push_back({std::move(name), std::move(t), true});
  }
  return out;
}

void save_model(const AvdModel& model, const std::filesystem::path& path) {
  auto entries = named_tensors(model);
  entries.insert(entries.begin(), NamedTensor{kArchEntry, arch_tensor(model.arch), false});
  save_checkpoint(entries, path);
}

AvdModel load_model(const std::filesystem::path& path) {
  auto entries = load_checkpoint(path);
  std::map<std::string, Tensor> by_name;
  for (auto& e : entries) {
    if (!by_name.emplace(e.name, e.tensor).second) {
      throw FormatError(FormatErrorCode::malformed, "duplicate checkpoint entry " + e.name);
    }
  }
  auto arch_it = by_name.find(kArchEntry);
  if (arch_it == by_name.end()) throw FormatError(FormatErrorCode::malformed, path.string() + " has no meta.arch entry");
  AvdModel model = init_params(0, arch_from_tensor(arch_it->second));
  by_name.erase(arch_it);
  for (auto& slot : named_tensors(model)) {
    auto it = by_name.find(slot.name);
    if (it == by_name.end()) throw FormatError(FormatErrorCode::malformed, "checkpoint lacks " + slot.name);
    if (it->second.shape() != slot.tensor.shape()) {
      throw FormatError(FormatErrorCode::malformed, "entry " + slot.name + " has shape " +
                                                        shape_to_string(it->second.shape()) + ", expected " +
                                                        shape_to_string(slot.tensor.shape()));
    }
    // The slot shares storage with the model, so copying into it fills the model in place.
    auto src = it->second.data();
    std::copy(src.begin(), src.end(), slot.tensor.data().begin());
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw FormatError(FormatErrorCode::malformed, "unexpected checkpoint entry " + by_name.begin()->first);
  }
  return model;
}

}  // namespace avd
