#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "avd/errors.hpp"

namespace avd::io {

template <class UInt>
void write_le(std::ostream& os, UInt value) {
  unsigned char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

inline void write_f32s(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) write_le(os, std::bit_cast<std::uint32_t>(v));
  }
}

/// Reads exactly `n` bytes or throws a truncation error naming `what`.
inline void read_exact(std::istream& is, char* dst, std::size_t n, const std::string& what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError(FormatErrorCode::truncated, "truncated file while reading " + what);
  }
}

template <class UInt>
UInt read_le(std::istream& is, const std::string& what) {
  unsigned char bytes[sizeof(UInt)];
  read_exact(is, reinterpret_cast<char*>(bytes), sizeof bytes, what);
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
  return value;
}

inline void read_f32s(std::istream& is, std::span<float> out, const std::string& what) {
  if constexpr (std::endian::native == std::endian::little) {
    read_exact(is, reinterpret_cast<char*>(out.data()), out.size_bytes(), what);
  } else {
    for (auto& v : out) v = std::bit_cast<float>(read_le<std::uint32_t>(is, what));
  }
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char got[4];
  read_exact(is, got, 4, "magic");
  for (int i = 0; i < 4; ++i) {
    if (got[i] != magic[i]) throw FormatError(FormatErrorCode::bad_magic, std::string("bad magic, expected ") + magic);
  }
}

}  // namespace avd::io
