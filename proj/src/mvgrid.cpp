#include "gridedit/mvgrid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gridedit {
namespace detail {

PixelBuffer::PixelBuffer(int width, int height)
    : width_(width),
      height_(height),
      values_(static_cast<std::size_t>(width) * height * kChannels, 0.0) {}

PixelBuffer::PixelBuffer(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  const auto expected = static_cast<std::size_t>(width) * height * kChannels;
  if (values_.size() != expected) {
    throw ShapeError("pixel buffer holds " + std::to_string(values_.size()) +
                     " values, expected " + std::to_string(expected));
  }
  if (!all_finite()) throw ShapeError("pixel buffer contains non-finite values");
}

bool PixelBuffer::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

bool PixelBuffer::in_unit_range() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return v >= -1.0 && v <= 1.0; });
}

}  // namespace detail

namespace {

int checked_tile(int tile_size) {
  if (tile_size < kMinTileSize) {
    throw ShapeError("tile size " + std::to_string(tile_size) +
                     " is below the minimum of " + std::to_string(kMinTileSize));
  }
  return tile_size;
}

}  // namespace

ViewImage::ViewImage(int tile_size)
    : PixelBuffer(checked_tile(tile_size), tile_size) {}

ViewImage::ViewImage(int tile_size, std::vector<double> values)
    : PixelBuffer(checked_tile(tile_size), tile_size, std::move(values)) {}

ViewImage ViewImage::filled(int tile_size, double value) {
  ViewImage v(tile_size);
  std::fill(v.values_.begin(), v.values_.end(), value);
  return v;
}

MvGrid::MvGrid(int tile_size)
    : PixelBuffer(kGridCols * checked_tile(tile_size), kGridRows * tile_size),
      tile_size_(tile_size) {}

MvGrid::MvGrid(int tile_size, std::vector<double> values)
    : PixelBuffer(kGridCols * checked_tile(tile_size), kGridRows * tile_size,
                  std::move(values)),
      tile_size_(tile_size) {}

MvGrid MvGrid::filled(int tile_size, double value) {
  MvGrid g(tile_size);
  std::fill(g.values_.begin(), g.values_.end(), value);
  return g;
}

MvGrid assemble(std::span<const ViewImage> tiles) {
  if (tiles.size() != kNumViews) {
    throw ShapeError("assemble expects " + std::to_string(kNumViews) +
                     " tiles, got " + std::to_string(tiles.size()));
  }
  const int ts = tiles[0].tile_size();
  for (const auto& t : tiles) {
    if (t.tile_size() != ts) throw ShapeError("assemble: tiles differ in size");
  }
  MvGrid grid(ts);
  const std::size_t row_len = static_cast<std::size_t>(ts) * kChannels;
  for (int k = 0; k < kNumViews; ++k) {
    const auto [r, c] = tile_block(k);
    auto src = tiles[k].values();
    auto dst = grid.values();
    for (int y = 0; y < ts; ++y) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(y) * row_len, row_len,
                  dst.begin() + static_cast<std::ptrdiff_t>(grid.index(r * ts + y, c * ts, 0)));
    }
  }
  return grid;
}

std::array<ViewImage, kNumViews> split(const MvGrid& grid) {
  const int ts = grid.tile_size();
  const std::size_t row_len = static_cast<std::size_t>(ts) * kChannels;
  std::array<ViewImage, kNumViews> tiles{ViewImage(ts), ViewImage(ts), ViewImage(ts),
                                         ViewImage(ts), ViewImage(ts), ViewImage(ts)};
  for (int k = 0; k < kNumViews; ++k) {
    const auto [r, c] = tile_block(k);
    auto src = grid.values();
    auto dst = tiles[k].values();
    for (int y = 0; y < ts; ++y) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(grid.index(r * ts + y, c * ts, 0)),
                  row_len, dst.begin() + static_cast<std::ptrdiff_t>(y) * row_len);
    }
  }
  return tiles;
}

MvGrid broadcast(const ViewImage& view) {
  std::array<ViewImage, kNumViews> tiles{view, view, view, view, view, view};
  return assemble(tiles);
}

void require_same_shape(const detail::PixelBuffer& a, const detail::PixelBuffer& b,
                        const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.width()) +
                     "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                     "x" + std::to_string(b.height()) + ")");
  }
}

double l2_norm(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace gridedit
