#pragma once

#include <array>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "gridedit/errors.hpp"

namespace gridedit {

inline constexpr int kGridRows = 3;
inline constexpr int kGridCols = 2;
inline constexpr int kNumViews = kGridRows * kGridCols;
inline constexpr int kChannels = 3;
inline constexpr int kMinTileSize = 8;
inline constexpr int kDefaultTileSize = 32;

namespace detail {

// Interleaved RGB raster, row-major over pixels (HWC).
class PixelBuffer {
 public:
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator()(int y, int x, int c) {
    return values_[index(y, x, c)];
  }
  double operator()(int y, int x, int c) const {
    return values_[index(y, x, c)];
  }

  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  bool all_finite() const noexcept;
  /// True when every value lies in [-1, +1].
  bool in_unit_range() const noexcept;

  friend bool operator==(const PixelBuffer&, const PixelBuffer&) = default;

 protected:
  PixelBuffer(int width, int height);
  PixelBuffer(int width, int height, std::vector<double> values);

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

}  // namespace detail

/// A single square view (condition image or grid tile).
///
/// Rendered and loaded views hold values in [-1, +1]; noised intermediates
/// may leave that range but must stay finite.
class ViewImage : public detail::PixelBuffer {
 public:
  explicit ViewImage(int tile_size = kDefaultTileSize);
  ViewImage(int tile_size, std::vector<double> values);

  static ViewImage filled(int tile_size, double value);

  int tile_size() const noexcept { return width_; }

  friend bool operator==(const ViewImage&, const ViewImage&) = default;
};

/// Six views tiled as 3 rows x 2 columns; tile k sits at row k / 2,
/// column k % 2.
class MvGrid : public detail::PixelBuffer {
 public:
  explicit MvGrid(int tile_size = kDefaultTileSize);
  MvGrid(int tile_size, std::vector<double> values);

  static MvGrid filled(int tile_size, double value);

  int tile_size() const noexcept { return tile_size_; }

  friend bool operator==(const MvGrid&, const MvGrid&) = default;

 private:
  int tile_size_;
};

/// Pure layout function: tile index -> (row, col) block of the grid.
constexpr std::array<int, 2> tile_block(int tile_index) {
  return {tile_index / kGridCols, tile_index % kGridCols};
}

MvGrid assemble(std::span<const ViewImage> tiles);
std::array<ViewImage, kNumViews> split(const MvGrid& grid);

/// Repeats a view into all six tile positions.
MvGrid broadcast(const ViewImage& view);

template <class T>
concept Raster = std::derived_from<T, detail::PixelBuffer>;

template <Raster T>
bool same_shape(const T& a, const T& b) {
  return a.width() == b.width() && a.height() == b.height();
}

void require_same_shape(const detail::PixelBuffer& a,
                        const detail::PixelBuffer& b, const char* what);

template <Raster T>
T operator+(const T& a, const T& b) {
  require_same_shape(a, b, "operator+");
  T out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

template <Raster T>
T operator-(const T& a, const T& b) {
  require_same_shape(a, b, "operator-");
  T out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

template <Raster T>
T operator*(double s, const T& a) {
  T out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

/// Euclidean norm over all elements.
double l2_norm(std::span<const double> values);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace gridedit
