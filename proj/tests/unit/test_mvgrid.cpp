#include <doctest.h>

#include <vector>

#include "gridedit/mvgrid.hpp"
#include "test_support.hpp"

using namespace gridedit;
using gridedit::testing::random_grid;
using gridedit::testing::random_view;

namespace {

std::vector<ViewImage> constant_tiles(int tile) {
  std::vector<ViewImage> tiles;
  for (int k = 0; k < kNumViews; ++k) tiles.push_back(ViewImage::filled(tile, k / 5.0));
  return tiles;
}

}  // namespace

TEST_CASE("assemble of zero tiles gives a 48x32 zero grid") {
  std::vector<ViewImage> tiles(kNumViews, ViewImage(16));
  const MvGrid g = assemble(tiles);
  CHECK(g.width() == 32);
  CHECK(g.height() == 48);
  for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("block (r, c) holds tile 2r + c") {
  const MvGrid g = assemble(constant_tiles(16));
  for (int r = 0; r < kGridRows; ++r) {
    for (int c = 0; c < kGridCols; ++c) {
      for (int y = r * 16; y < (r + 1) * 16; ++y) {
        for (int x = c * 16; x < (c + 1) * 16; ++x) {
          for (int ch = 0; ch < kChannels; ++ch) CHECK(g(y, x, ch) == (2 * r + c) / 5.0);
        }
      }
    }
  }
}

TEST_CASE("split inverts assemble") {
  std::vector<ViewImage> tiles;
  for (int k = 0; k < kNumViews; ++k) tiles.push_back(random_view(16, 100 + k));
  const auto back = split(assemble(tiles));
  for (int k = 0; k < kNumViews; ++k) CHECK(back[k] == tiles[k]);

  const auto zeros = split(MvGrid(16));
  for (const auto& t : zeros) CHECK(t == ViewImage(16));
}

TEST_CASE("round trip assemble(split(g)) == g over random grids") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int tile = 8 + static_cast<int>(seed % 5) * 4;
    const MvGrid g = random_grid(tile, seed, -3.0, 3.0);
    const auto tiles = split(g);
    CHECK(assemble(tiles) == g);
  }
}

TEST_CASE("single pixel lands in the tile found by a brute-force scan") {
  MvGrid g(16);
  g(20, 5, 1) = 0.75;
  const auto tiles = split(g);
  int found_tile = -1;
  int found_y = -1;
  int found_x = -1;
  for (int k = 0; k < kNumViews; ++k) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        if (tiles[k](y, x, 1) != 0.0) {
          CHECK(found_tile == -1);
          found_tile = k;
          found_y = y;
          found_x = x;
        }
      }
    }
  }
  CHECK(found_tile == 2);
  CHECK(found_y == 4);
  CHECK(found_x == 5);
}

TEST_CASE("layout is a pure function of the tile index") {
  for (int k = 0; k < kNumViews; ++k) {
    const auto [r, c] = tile_block(k);
    CHECK(2 * r + c == k);
    CHECK(tile_block(k) == tile_block(k));
  }
}

TEST_CASE("shape errors") {
  std::vector<ViewImage> five(5, ViewImage(16));
  CHECK_THROWS_AS(assemble(five), ShapeError);

  std::vector<ViewImage> mixed(kNumViews, ViewImage(16));
  mixed[3] = ViewImage(8);
  CHECK_THROWS_AS(assemble(mixed), ShapeError);

  CHECK_THROWS_AS(ViewImage(4), ShapeError);
  CHECK_THROWS_AS(ViewImage(8, std::vector<double>(10)), ShapeError);
  CHECK_THROWS_AS(MvGrid(8) + MvGrid(16), ShapeError);
}

TEST_CASE("non-finite values are rejected at construction") {
  std::vector<double> values(8 * 8 * 3, 0.0);
  values[7] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ViewImage(8, values), ShapeError);
}

TEST_CASE("broadcast repeats the view into every tile") {
  const ViewImage v = random_view(8, 3);
  const auto tiles = split(broadcast(v));
  for (const auto& t : tiles) CHECK(t == v);
}
