// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"

namespace syncsde {

// Spatial {0,1} mask; 1 marks background / covered cells.
class BinaryMask {
 public:
  BinaryMask() = default;
  explicit BinaryMask(Shape shape, std::uint8_t fill = 0) : shape_(std::move(shape)), bits_(shape_size(shape_), fill) {
    if (fill > 1) throw ShapeError("binary mask entries must be 0 or 1");
  }

  static BinaryMask from_values(Shape shape, const std::vector<double>& values) {
    if (values.size() != shape_size(shape))
      throw ShapeError("mask data length does not match shape " + shape_string(shape));
    BinaryMask m(std::move(shape));
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] != 0.0 && values[i] != 1.0)
        throw ShapeError("binary mask entry " + std::to_string(i) + " is not 0 or 1");
      m.bits_[i] = values[i] == 1.0;
    }
    return m;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }
  bool all() const { return count() == size(); }
  bool none() const { return count() == 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  Shape shape_;
  std::vector<std::uint8_t> bits_;
};

// Real-valued spatial mask, e.g. a background likelihood.
struct SoftMask {
  Shape shape;
  std::vector<double> values;
};

// Diagonal of a 0/1 precision matrix over flattened spatial cells.
class PrecisionMask {
 public:
  PrecisionMask() = default;
  explicit PrecisionMask(std::vector<double> diag) : diag_(std::move(diag)) {
    for (double d : diag_)
      if (d != 0.0 && d != 1.0) throw ShapeError("precision mask entries must be 0 or 1");
  }
  static PrecisionMask ones(std::size_t n) { return PrecisionMask(std::vector<double>(n, 1.0)); }
  static PrecisionMask zeros(std::size_t n) { return PrecisionMask(std::vector<double>(n, 0.0)); }

  std::size_t size() const noexcept { return diag_.size(); }
  double operator[](std::size_t i) const { return diag_[i]; }
  const std::vector<double>& diag() const noexcept { return diag_; }

  // 1 - M
  PrecisionMask complement() const {
    std::vector<double> out(diag_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - diag_[i];
    return PrecisionMask(std::move(out));
  }

  friend bool operator==(const PrecisionMask&, const PrecisionMask&) = default;

 private:
  std::vector<double> diag_;
};

// Row-major flatten of a binary mask into a precision diagonal.
inline PrecisionMask reshape_mask(const BinaryMask& b) {
  std::vector<double> diag(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) diag[i] = b[i] ? 1.0 : 0.0;
  return PrecisionMask(std::move(diag));
}

inline BinaryMask unflatten_mask(const PrecisionMask& m, Shape shape) {
  return BinaryMask::from_values(std::move(shape), m.diag());
}

inline BinaryMask threshold_mask(const SoftMask& soft, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("task.tau", "threshold must lie in [0, 1]");
  if (soft.values.size() != shape_size(soft.shape)) throw ShapeError("soft mask length does not match its shape");
  BinaryMask out(soft.shape);
  for (std::size_t i = 0; i < soft.values.size(); ++i) {
    const double v = soft.values[i];
    if (!(v >= 0.0 && v <= 1.0))
      throw ShapeError("soft mask entry " + std::to_string(i) + " outside [0, 1]");
    out.set(i, v >= tau);
  }
  return out;
}

// Background soft mask from attention maps. self_attn is (H,W,H,W), cross_attn
// is (N,H,W). The foreground score at (h,w) is
//   sum_{h',w'} self_attn[h,w,h',w'] * cross_attn[token,h',w'],
// min-max normalized over the grid; the result is 1 minus that score. A
// constant score map yields 0.5 everywhere.
inline SoftMask attention_soft_mask(const Grid& self_attn, const Grid& cross_attn, std::size_t token) {
  if (self_attn.rank() != 4 || cross_attn.rank() != 3)
    throw ShapeError("attention_soft_mask expects self (H,W,H,W) and cross (N,H,W)");
  const auto& s = self_attn.shape();
  const auto& c = cross_attn.shape();
  const std::size_t H = s[0], W = s[1];
  if (s[2] != H || s[3] != W || c[1] != H || c[2] != W)
    throw ShapeError("attention shapes disagree: self " + shape_string(s) + ", cross " + shape_string(c));
  if (token >= c[0])
    throw ConfigError("task.attention.token", "token index " + std::to_string(token) + " out of range");

  const std::size_t hw = H * W;
  const double* cross = cross_attn.values().data() + token * hw;
  std::vector<double> fg(hw, 0.0);
  for (std::size_t p = 0; p < hw; ++p) {
    const double* row = self_attn.values().data() + p * hw;
    double acc = 0;
    for (std::size_t q = 0; q < hw; ++q) acc += row[q] * cross[q];
    fg[p] = acc;
  }
  const auto [lo, hi] = std::minmax_element(fg.begin(), fg.end());
  const double min = *lo, range = *hi - *lo;
  SoftMask out{Shape{H, W}, std::vector<double>(hw)};
  for (std::size_t p = 0; p < hw; ++p)
    out.values[p] = range > 0 ? 1.0 - (fg[p] - min) / range : 0.5;
  if (!std::all_of(out.values.begin(), out.values.end(), [](double v) { return std::isfinite(v); }))
    throw NumericError("attention_soft_mask: non-finite attention values");
  return out;
}

}  // namespace syncsde
