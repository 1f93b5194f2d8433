#include "avd/image_io.hpp"

#include <cmath>
#include <fstream>

#include "avd/errors.hpp"

namespace avd {

std::uint8_t quantize_pixel(float v) {
  if (!(v > 0.0f)) return 0;
  if (v >= 1.0f) return 255;
  return static_cast<std::uint8_t>(std::floor(static_cast<double>(v) * 255.0 + 0.5));
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("encode_ppm: expected image [3,H,W], got " + shape_to_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + 3 * plane);
  auto px = image.data();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out.push_back(quantize_pixel(px[c * plane + i]));
  }
  return out;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(image);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(FormatErrorCode::io, "cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError(FormatErrorCode::io, "write failed for " + path.string());
}

}  // namespace avd
