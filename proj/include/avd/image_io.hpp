#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avd/tensor.hpp"

namespace avd {

/// floor(v * 255 + 0.5) after clamping to [0, 1]; NaN maps to 0.
std::uint8_t quantize_pixel(float v);

/// Binary PPM (P6, maxval 255) of a [3,H,W] image: header
/// "P6\n<W> <H>\n255\n" followed by row-major interleaved RGB bytes.
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
void write_ppm(const Tensor& image, const std::filesystem::path& path);

}  // namespace avd
