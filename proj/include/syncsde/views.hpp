// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"
#include "syncsde/masks.hpp"

namespace syncsde {

enum class ViewKind { identity, crop, rotate90, rotate180, rotate270, flip_vertical, skew, segment1d, table };

inline const char* to_string(ViewKind k) {
  switch (k) {
    case ViewKind::identity: return "identity";
    case ViewKind::crop: return "crop";
    case ViewKind::rotate90: return "rotate90";
    case ViewKind::rotate180: return "rotate180";
    case ViewKind::rotate270: return "rotate270";
    case ViewKind::flip_vertical: return "flip-vertical";
    case ViewKind::skew: return "skew";
    case ViewKind::segment1d: return "segment1d";
    case ViewKind::table: return "table";
  }
  return "?";
}

// Index map from canvas cells to patch cells over the spatial axes; channels
// pass through untouched. Every kind is lowered to a table holding, for each
// patch cell, the canvas cell it reads (or -1 when uncovered).
class ViewMap {
 public:
  static constexpr std::ptrdiff_t kUncovered = -1;

  static ViewMap identity(Shape canvas) {
    ViewMap m(ViewKind::identity, canvas, canvas);
    for (std::size_t p = 0; p < m.source_.size(); ++p) m.source_[p] = static_cast<std::ptrdiff_t>(p);
    return m;
  }

  // Window of `size` starting at `offset`; both have one entry per spatial axis.
  static ViewMap crop(Shape canvas, Shape offset, Shape size) {
    if (offset.size() != canvas.size() || size.size() != canvas.size())
      throw ShapeError("crop: offset/size rank must match canvas rank");
    for (std::size_t a = 0; a < canvas.size(); ++a)
      if (size[a] == 0 || offset[a] + size[a] > canvas[a])
        throw ShapeError("crop window exceeds canvas " + shape_string(canvas));
    ViewMap m(ViewKind::crop, canvas, size);
    m.offset_ = offset;
    if (canvas.size() == 1) {
      for (std::size_t i = 0; i < size[0]; ++i) m.source_[i] = static_cast<std::ptrdiff_t>(offset[0] + i);
    } else if (canvas.size() == 2) {
      for (std::size_t i = 0; i < size[0]; ++i)
        for (std::size_t j = 0; j < size[1]; ++j)
          m.source_[i * size[1] + j] = static_cast<std::ptrdiff_t>((offset[0] + i) * canvas[1] + offset[1] + j);
    } else {
      throw ShapeError("crop supports 1 or 2 spatial axes");
    }
    return m;
  }

  static ViewMap segment1d(std::size_t length, std::size_t offset, std::size_t segment) {
    auto m = crop(Shape{length}, Shape{offset}, Shape{segment});
    m.kind_ = ViewKind::segment1d;
    return m;
  }

  // Counterclockwise quarter turn: patch[i][j] = canvas[j][W-1-i].
  static ViewMap rotate90(Shape canvas) {
    const auto [H, W] = require_2d(canvas, "rotate90");
    ViewMap m(ViewKind::rotate90, canvas, Shape{W, H});
    for (std::size_t i = 0; i < W; ++i)
      for (std::size_t j = 0; j < H; ++j) m.source_[i * H + j] = static_cast<std::ptrdiff_t>(j * W + (W - 1 - i));
    return m;
  }

  static ViewMap rotate180(Shape canvas) {
    const auto [H, W] = require_2d(canvas, "rotate180");
    ViewMap m(ViewKind::rotate180, canvas, canvas);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        m.source_[i * W + j] = static_cast<std::ptrdiff_t>((H - 1 - i) * W + (W - 1 - j));
    return m;
  }

  // Clockwise quarter turn: patch[i][j] = canvas[H-1-j][i].
  static ViewMap rotate270(Shape canvas) {
    const auto [H, W] = require_2d(canvas, "rotate270");
    ViewMap m(ViewKind::rotate270, canvas, Shape{W, H});
    for (std::size_t i = 0; i < W; ++i)
      for (std::size_t j = 0; j < H; ++j) m.source_[i * H + j] = static_cast<std::ptrdiff_t>((H - 1 - j) * W + i);
    return m;
  }

  // Upside-down: patch[i][j] = canvas[H-1-i][j].
  static ViewMap flip_vertical(Shape canvas) {
    const auto [H, W] = require_2d(canvas, "flip-vertical");
    ViewMap m(ViewKind::flip_vertical, canvas, canvas);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) m.source_[i * W + j] = static_cast<std::ptrdiff_t>((H - 1 - i) * W + j);
    return m;
  }

  // Row i is cyclically rotated by shift * i columns:
  // patch[i][j] = canvas[i][(j + shift * i) mod W].
  static ViewMap skew(Shape canvas, long long shift) {
    const auto [H, W] = require_2d(canvas, "skew");
    ViewMap m(ViewKind::skew, canvas, canvas);
    m.shift_ = shift;
    const auto w = static_cast<long long>(W);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        long long col = (static_cast<long long>(j) + shift * static_cast<long long>(i)) % w;
        if (col < 0) col += w;
        m.source_[i * W + j] = static_cast<std::ptrdiff_t>(i * W + static_cast<std::size_t>(col));
      }
    return m;
  }

  // Arbitrary injective map given as (canvas_index, patch_index) pairs over
  // flattened spatial indices. Patch cells without a pair are uncovered.
  static ViewMap table(Shape canvas, Shape patch, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
    ViewMap m(ViewKind::table, canvas, patch);
    std::vector<std::uint8_t> used(shape_size(canvas), 0);
    for (const auto& [ci, pi] : pairs) {
      if (ci >= used.size() || pi >= m.source_.size())
        throw ShapeError("table view: index pair (" + std::to_string(ci) + ", " + std::to_string(pi) +
                         ") out of range");
      if (used[ci] || m.source_[pi] != kUncovered)
        throw ShapeError("table view: pair (" + std::to_string(ci) + ", " + std::to_string(pi) +
                         ") breaks injectivity");
      used[ci] = 1;
      m.source_[pi] = static_cast<std::ptrdiff_t>(ci);
    }
    return m;
  }

  ViewKind kind() const noexcept { return kind_; }
  const Shape& canvas_shape() const noexcept { return canvas_; }
  const Shape& patch_shape() const noexcept { return patch_; }
  const Shape& offset() const noexcept { return offset_; }
  long long shift() const noexcept { return shift_; }
  std::size_t canvas_size() const { return shape_size(canvas_); }
  std::size_t patch_size() const noexcept { return source_.size(); }

  // Canvas cell read by patch cell p, or kUncovered.
  std::ptrdiff_t source(std::size_t p) const { return source_[p]; }
  std::span<const std::ptrdiff_t> sources() const noexcept { return source_; }

  // Bijective between canvas and patch.
  bool is_total() const {
    if (patch_size() != canvas_size()) return false;
    for (auto s : source_)
      if (s == kUncovered) return false;
    return true;
  }

  // Canvas cells covered by the patch.
  BinaryMask coverage() const {
    BinaryMask mask(canvas_);
    for (auto s : source_)
      if (s != kUncovered) mask.set(static_cast<std::size_t>(s), true);
    return mask;
  }

  friend bool operator==(const ViewMap& a, const ViewMap& b) {
    return a.canvas_ == b.canvas_ && a.patch_ == b.patch_ && a.source_ == b.source_;
  }

 private:
  ViewMap(ViewKind kind, Shape canvas, Shape patch)
      : kind_(kind), canvas_(std::move(canvas)), patch_(std::move(patch)), source_(shape_size(patch_), kUncovered) {
    if (canvas_.empty() || patch_.empty()) throw ShapeError("view maps need at least one spatial axis");
  }

  static std::pair<std::size_t, std::size_t> require_2d(const Shape& s, const char* what) {
    if (s.size() != 2) throw ShapeError(std::string(what) + " needs a 2D canvas, got " + shape_string(s));
    return {s[0], s[1]};
  }

  ViewKind kind_;
  Shape canvas_;
  Shape patch_;
  Shape offset_;
  long long shift_ = 0;
  std::vector<std::ptrdiff_t> source_;
};

// Grid plus the spatial cells that received content.
struct Scatter {
  Grid grid;
  BinaryMask mask;
};

namespace detail {

inline void require_spatial(const Grid& g, const Shape& spatial, const char* what) {
  if (g.rank() < 2 || g.spatial_shape() != spatial)
    throw ShapeError(std::string(what) + ": grid " + shape_string(g.shape()) + " does not have spatial shape " +
                     shape_string(spatial));
}

inline Shape with_channels(std::size_t channels, const Shape& spatial) {
  Shape s{channels};
  s.insert(s.end(), spatial.begin(), spatial.end());
  return s;
}

}  // namespace detail

// patch = f(canvas); uncovered patch cells are 0.
inline Grid apply(const ViewMap& map, const Grid& canvas) {
  detail::require_spatial(canvas, map.canvas_shape(), "apply");
  const std::size_t C = canvas.channels();
  Grid patch(detail::with_channels(C, map.patch_shape()), 0.0, Space::patch);
  const std::size_t P = map.patch_size();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p)
      if (const auto s = map.source(p); s != ViewMap::kUncovered) patch.at(c, p) = canvas.at(c, static_cast<std::size_t>(s));
  return patch;
}

// Mask-valued apply: patch cells whose canvas source is set.
inline BinaryMask apply(const ViewMap& map, const BinaryMask& canvas_mask) {
  if (canvas_mask.shape() != map.canvas_shape()) throw ShapeError("apply: mask shape does not match canvas");
  BinaryMask out(map.patch_shape());
  for (std::size_t p = 0; p < map.patch_size(); ++p)
    if (const auto s = map.source(p); s != ViewMap::kUncovered) out.set(p, canvas_mask[static_cast<std::size_t>(s)]);
  return out;
}

// f^{-1}(patch): canvas with patch values at covered cells, zeros elsewhere.
inline Scatter invert(const ViewMap& map, const Grid& patch) {
  detail::require_spatial(patch, map.patch_shape(), "invert");
  const std::size_t C = patch.channels();
  Scatter out{Grid(detail::with_channels(C, map.canvas_shape()), 0.0, Space::canvas), map.coverage()};
  const std::size_t P = map.patch_size();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p)
      if (const auto s = map.source(p); s != ViewMap::kUncovered) out.grid.at(c, static_cast<std::size_t>(s)) = patch.at(c, p);
  return out;
}

// dst(src^{-1}(patch)) and the dst cells that received content.
inline Scatter transfer(const ViewMap& src, const ViewMap& dst, const Grid& patch) {
  if (src.canvas_shape() != dst.canvas_shape())
    throw ShapeError("transfer: canvas shapes differ " + shape_string(src.canvas_shape()) + " vs " +
                     shape_string(dst.canvas_shape()));
  const auto canvas = invert(src, patch);
  return {apply(dst, canvas.grid), apply(dst, canvas.mask)};
}

// Later-wins overlay of every inverted patch onto a zero canvas.
inline Scatter compose_phi_covered(std::span<const ViewMap> maps, std::span<const Grid> patches) {
  if (maps.empty()) throw ShapeError("compose_phi: no views");
  if (maps.size() != patches.size()) throw ShapeError("compose_phi: view and patch counts differ");
  const Shape& canvas = maps.front().canvas_shape();
  const std::size_t C = patches.front().channels();
  Scatter out{Grid(detail::with_channels(C, canvas), 0.0, Space::canvas), BinaryMask(canvas)};
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].canvas_shape() != canvas) throw ShapeError("compose_phi: views disagree on canvas shape");
    detail::require_spatial(patches[i], maps[i].patch_shape(), "compose_phi");
    if (patches[i].channels() != C) throw ShapeError("compose_phi: channel counts differ");
    for (std::size_t p = 0; p < maps[i].patch_size(); ++p) {
      const auto s = maps[i].source(p);
      if (s == ViewMap::kUncovered) continue;
      const auto cell = static_cast<std::size_t>(s);
      for (std::size_t c = 0; c < C; ++c) out.grid.at(c, cell) = patches[i].at(c, p);
      out.mask.set(cell, true);
    }
  }
  return out;
}

inline Grid compose_phi(std::span<const ViewMap> maps, std::span<const Grid> patches) {
  return compose_phi_covered(maps, patches).grid;
}

}  // namespace syncsde
