// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "syncsde/error.hpp"

namespace syncsde {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

enum class Space { patch, canvas };

// Dense real tensor in row-major order. Latent states use (channels, height,
// width) or (channels, length); raw tensors (attention maps) may take any rank.
class Grid {
 public:
  Grid() = default;

  explicit Grid(Shape shape, double fill = 0.0, Space space = Space::patch)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill), space_(space) {}

  Grid(Shape shape, std::vector<double> data, Space space = Space::patch)
      : shape_(std::move(shape)), data_(std::move(data)), space_(space) {
    if (data_.size() != shape_size(shape_))
      throw ShapeError("grid data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Space space() const noexcept { return space_; }
  void set_space(Space s) noexcept { space_ = s; }

  // Leading axis is the channel axis for latent grids.
  std::size_t channels() const { return shape_.empty() ? 0 : shape_.front(); }
  Shape spatial_shape() const { return shape_.empty() ? Shape{} : Shape(shape_.begin() + 1, shape_.end()); }
  std::size_t spatial_size() const { return channels() == 0 ? 0 : size() / channels(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t c, std::size_t p) { return data_[c * spatial_size() + p]; }
  double at(std::size_t c, std::size_t p) const { return data_[c * spatial_size() + p]; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  Space space_ = Space::patch;
};

inline void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) +
                     " does not match " + shape_string(b.shape()));
}

inline void require_finite(const Grid& g, const char* what) {
  if (!g.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

// Latent states need a channel axis plus one or two spatial axes.
inline void require_latent(const Shape& shape, const char* what) {
  if (shape.size() != 2 && shape.size() != 3)
    throw ShapeError(std::string(what) + ": latent grids are (C,L) or (C,H,W), got " +
                     shape_string(shape));
  for (auto d : shape)
    if (d == 0) throw ShapeError(std::string(what) + ": zero-sized axis in " + shape_string(shape));
}

inline double squared_norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace syncsde
