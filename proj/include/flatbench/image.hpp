#pragma once

// Raster types and the pre-processing stage: HSV background removal,
// center of mass, block partitioning and coverage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "flatbench/error.hpp"

namespace flatbench {

/// Image-plane point in pixel units. Pixel (u, v) has its center at (u, v).
using Point2 = Eigen::Vector2d;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major 8-bit RGB raster.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::BadParams, "image dimensions must be positive");
    data_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
      data_[i] = fill.r;
      data_[i + 1] = fill.g;
      data_[i + 2] = fill.b;
    }
  }
  RgbImage(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::BadParams, "image dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(width) * height * 3)
      throw Error(ErrorCode::BadParams, "pixel buffer length does not match width*height*3");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }
  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  Rgb at(int x, int y) const {
    const auto i = index(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const auto i = index(x, y);
    data_[i] = c.r;
    data_[i + 1] = c.g;
    data_[i + 2] = c.b;
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  std::size_t index(int x, int y) const { return (static_cast<std::size_t>(y) * width_ + x) * 3; }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// One flag per pixel, true = cloth.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, bool fill = false)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill ? 1 : 0) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::BadParams, "mask dimensions must be positive");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Inclusive HSV window. Hue in degrees; h_lo > h_hi wraps through 0.
struct HsvBounds {
  double h_lo = 180.0, h_hi = 260.0;
  double s_lo = 0.25, s_hi = 1.0;
  double v_lo = 0.08, v_hi = 1.0;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!(h_lo >= 0.0 && h_lo < 360.0 && h_hi >= 0.0 && h_hi < 360.0))
      throw Error(ErrorCode::BadParams, "hue bounds must lie in [0, 360)");
    if (!(unit(s_lo) && unit(s_hi) && unit(v_lo) && unit(v_hi)) || s_lo > s_hi || v_lo > v_hi)
      throw Error(ErrorCode::BadParams, "saturation/value bounds must be ordered fractions");
  }

  bool contains(double h, double s, double v) const {
    const bool hue_ok = h_lo <= h_hi ? (h >= h_lo && h <= h_hi) : (h >= h_lo || h <= h_hi);
    return hue_ok && s >= s_lo && s <= s_hi && v >= v_lo && v <= v_hi;
  }
};

struct Hsv {
  double h, s, v;
};

/// Hexcone RGB -> HSV. Achromatic pixels get hue 0.
inline Hsv rgb_to_hsv(Rgb c) {
  const double r = c.r / 255.0, g = c.g / 255.0, b = c.b / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
  }
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return {h, s, mx};
}

/// Keeps only the largest 4-connected component of `mask` (first in raster
/// order on ties). Returns an empty mask of the same size when nothing is set.
inline Mask largest_component(const Mask& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<int> stack;
  int best_label = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int idx = y * w + x;
      if (!mask.at(x, y) || label[idx] >= 0) continue;
      const int id = next++;
      std::size_t size = 0;
      label[idx] = id;
      stack.push_back(idx);
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        ++size;
        const int cx = cur % w, cy = cur / w;
        const std::array<std::array<int, 2>, 4> nb{{{cx + 1, cy}, {cx - 1, cy}, {cx, cy + 1}, {cx, cy - 1}}};
        for (const auto& [nx, ny] : nb) {
          if (!mask.in_bounds(nx, ny)) continue;
          const int nidx = ny * w + nx;
          if (mask.at(nx, ny) && label[nidx] < 0) {
            label[nidx] = id;
            stack.push_back(nidx);
          }
        }
      }
      if (size > best_size) {
        best_size = size;
        best_label = id;
      }
    }
  }
  Mask out(w, h, false);
  if (best_label < 0) return out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (label[y * w + x] == best_label) out.set(x, y, true);
  return out;
}

inline Mask segment_cloth(const RgbImage& img, const HsvBounds& bounds) {
  if (img.empty()) throw Error(ErrorCode::BadParams, "cannot segment an empty image");
  bounds.validate();
  Mask raw(img.width(), img.height(), false);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Hsv p = rgb_to_hsv(img.at(x, y));
      if (bounds.contains(p.h, p.s, p.v)) raw.set(x, y, true);
    }
  }
  return largest_component(raw);
}

inline Point2 center_of_mass(const Mask& mask) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      sx += x;
      sy += y;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "center of mass of an empty mask");
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

inline double coverage(const Mask& mask) {
  const double total = static_cast<double>(mask.width()) * mask.height();
  if (total <= 0.0) throw Error(ErrorCode::BadParams, "coverage of a degenerate mask");
  return static_cast<double>(mask.count()) / total;
}

struct BlockRect {
  int x0 = 0, y0 = 0, w = 0, h = 0;

  int area() const noexcept { return w * h; }
  bool contains(int x, int y) const noexcept { return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h; }
  Point2 center() const { return {x0 + (w - 1) / 2.0, y0 + (h - 1) / 2.0}; }
  friend bool operator==(const BlockRect&, const BlockRect&) = default;
};

/// Disjoint tiling of an image into rows x cols blocks, indexed row-major.
/// The last row/column absorbs any remainder.
struct BlockGrid {
  int image_w = 0, image_h = 0;
  int rows = 0, cols = 0;
  int block_w = 0, block_h = 0;  // nominal size; edge blocks may be larger
  std::vector<BlockRect> blocks;

  int n_b() const noexcept { return rows * cols; }
  int index(int row, int col) const noexcept { return row * cols + col; }
  int row_of(int j) const noexcept { return j / cols; }
  int col_of(int j) const noexcept { return j % cols; }

  int block_of(int x, int y) const {
    const int c = std::min(x / block_w, cols - 1);
    const int r = std::min(y / block_h, rows - 1);
    return index(r, c);
  }
};

inline BlockGrid split_blocks(int width, int height, int rows, int cols) {
  if (width <= 0 || height <= 0 || rows < 1 || cols < 1 || rows > height || cols > width)
    throw Error(ErrorCode::BadGrid, "grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                                        " does not fit a " + std::to_string(width) + "x" +
                                        std::to_string(height) + " image");
  BlockGrid g;
  g.image_w = width;
  g.image_h = height;
  g.rows = rows;
  g.cols = cols;
  g.block_w = width / cols;
  g.block_h = height / rows;
  g.blocks.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      BlockRect b;
      b.x0 = c * g.block_w;
      b.y0 = r * g.block_h;
      b.w = c == cols - 1 ? width - b.x0 : g.block_w;
      b.h = r == rows - 1 ? height - b.y0 : g.block_h;
      g.blocks.push_back(b);
    }
  }
  return g;
}

}  // namespace flatbench
