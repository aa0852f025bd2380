// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"
#include "syncsde/hash.hpp"

namespace syncsde {

// Binary tensor layout, all little-endian:
//   "SYNB" | u16 version | u8 dtype | u8 rank | u32 dims[rank] | payload (row-major)
enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

inline constexpr std::uint16_t kTensorVersion = 1;

inline std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

inline std::string encode_tensor(const Grid& g, DType dtype = DType::f64) {
  if (g.rank() < 1 || g.rank() > 255) throw ShapeError("tensor rank must be in [1, 255]");
  std::string out = "SYNB";
  put_le(out, kTensorVersion);
  put_le(out, static_cast<std::uint8_t>(dtype));
  put_le(out, static_cast<std::uint8_t>(g.rank()));
  for (auto d : g.shape()) {
    if (d > 0xffffffffu) throw ShapeError("tensor dimension exceeds u32");
    put_le(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + g.size() * dtype_size(dtype));
  for (double v : g.values()) {
    if (dtype == DType::f32) put_le(out, static_cast<float>(v));
    else put_le(out, v);
  }
  return out;
}

inline Grid decode_tensor(const std::string& bytes, const std::string& origin = "tensor") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  auto need = [&](std::size_t n, std::size_t at) {
    if (bytes.size() < at + n) throw IoError(origin + ": truncated tensor file");
  };
  need(8, 0);
  if (bytes.compare(0, 4, "SYNB") != 0) throw IoError(origin + ": bad magic, not a SYNB tensor");
  if (get_le<std::uint16_t>(p + 4) != kTensorVersion) throw IoError(origin + ": unsupported tensor version");
  const auto code = p[6];
  if (code != 1 && code != 2) throw IoError(origin + ": unknown dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const std::size_t rank = p[7];
  if (rank == 0) throw IoError(origin + ": rank 0 tensor");
  need(4 * rank, 8);
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = get_le<std::uint32_t>(p + 8 + 4 * i);
  const std::size_t header = 8 + 4 * rank;
  const std::size_t count = shape_size(shape);
  if (bytes.size() != header + count * dtype_size(dtype))
    throw IoError(origin + ": payload length does not match dims " + shape_string(shape));
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i)
    values[i] = dtype == DType::f32 ? static_cast<double>(get_le<float>(p + header + 4 * i))
                                    : get_le<double>(p + header + 8 * i);
  return Grid(std::move(shape), std::move(values));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline void write_tensor(const std::filesystem::path& path, const Grid& g, DType dtype = DType::f64) {
  write_file(path, encode_tensor(g, dtype));
}

inline Grid read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path), path.string()); }

// Min-max quantization to bytes; a constant grid maps to 128.
inline std::vector<std::uint8_t> quantize(std::span<const double> values) {
  std::vector<std::uint8_t> out(values.size(), 128);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround((values[i] - *lo) / range * 255.0));
  return out;
}

// Binary PGM (P5) for 1-channel grids, PPM (P6) for 3-channel ones. A 1D
// grid (C,L) becomes a 1-row image.
inline std::string encode_preview(const Grid& g) {
  if (g.rank() != 2 && g.rank() != 3) throw ShapeError("preview needs (C,L) or (C,H,W)");
  const std::size_t C = g.channels();
  if (C != 1 && C != 3) throw ShapeError("preview supports 1 or 3 channels, got " + std::to_string(C));
  const std::size_t H = g.rank() == 3 ? g.shape()[1] : 1;
  const std::size_t W = g.shape().back();
  const auto q = quantize(g.values());
  std::string out = (C == 1 ? "P5\n" : "P6\n") + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  const std::size_t P = H * W;
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t c = 0; c < C; ++c) out += static_cast<char>(q[c * P + p]);
  return out;
}

inline void export_preview(const Grid& g, const std::filesystem::path& path) { write_file(path, encode_preview(g)); }

}  // namespace syncsde
