#pragma once

// Little-endian primitives shared by the SCB1/SCW1/SCV1 readers and writers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "scatterbench/errors.hpp"

namespace scatterbench::detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline void write_f32s(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) write_f32(os, v);
  }
}

inline void read_exact(std::istream& is, void* dst, std::size_t n, const char* what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw IoError(std::string(what) + ": truncated file");
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  read_exact(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  read_exact(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint8_t read_u8(std::istream& is, const char* what) {
  unsigned char b = 0;
  read_exact(is, &b, 1, what);
  return b;
}

inline float read_f32(std::istream& is, const char* what) { return std::bit_cast<float>(read_u32(is, what)); }

inline void read_f32s(std::istream& is, std::span<float> out, const char* what) {
  if constexpr (std::endian::native == std::endian::little) {
    read_exact(is, out.data(), out.size_bytes(), what);
  } else {
    for (float& v : out) v = read_f32(is, what);
  }
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const char* what) {
  char got[4];
  read_exact(is, got, 4, what);
  if (std::memcmp(got, magic, 4) != 0) throw IoError(std::string(what) + ": bad magic bytes");
}

}  // namespace scatterbench::detail
