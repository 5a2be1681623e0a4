#include "gridedit/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace gridedit {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

void write_rgb(const std::filesystem::path& path, int width, int height,
               std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) bytes[i] = encode_value(values[i]);

  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot open " + path.string() + " for writing");

  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * width * kChannels;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("writing " + path.string() + " failed: " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;
};

RgbImage read_rgb(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError(path.string() + " is not a PNG file");
  }

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed");
  }
  std::vector<std::uint8_t> bytes;
  std::vector<png_bytep> rows;
  RgbImage out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("reading " + path.string() + " failed: " + err);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  if (stride != static_cast<std::size_t>(out.width) * kChannels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path.string() + ": unsupported pixel layout");
  }
  bytes.resize(stride * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = bytes.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.values.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) out.values[i] = decode_value(bytes[i]);
  return out;
}

}  // namespace

std::uint8_t encode_value(double v) noexcept {
  const double scaled = std::floor((v + 1.0) * 127.5 + 0.5);
  if (!(scaled > 0.0)) return 0;
  if (scaled >= 255.0) return 255;
  return static_cast<std::uint8_t>(scaled);
}

double decode_value(std::uint8_t p) noexcept { return p / 127.5 - 1.0; }

void write_png(const std::filesystem::path& path, const ViewImage& view) {
  write_rgb(path, view.width(), view.height(), view.values());
}

void write_png(const std::filesystem::path& path, const MvGrid& grid) {
  write_rgb(path, grid.width(), grid.height(), grid.values());
}

ViewImage read_view(const std::filesystem::path& path, std::optional<int> expected_tile) {
  RgbImage img = read_rgb(path);
  if (img.width != img.height || img.width < kMinTileSize) {
    throw DataError(path.string() + ": expected a square view, got " +
                    std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  if (expected_tile && img.width != *expected_tile) {
    throw DataError(path.string() + ": view size " + std::to_string(img.width) +
                    " does not match tile size " + std::to_string(*expected_tile));
  }
  return ViewImage(img.width, std::move(img.values));
}

MvGrid read_grid(const std::filesystem::path& path, std::optional<int> expected_tile) {
  RgbImage img = read_rgb(path);
  const int ts = img.width / kGridCols;
  if (img.width % kGridCols != 0 || img.height != kGridRows * ts || ts < kMinTileSize) {
    throw DataError(path.string() + ": " + std::to_string(img.width) + "x" +
                    std::to_string(img.height) + " is not a 3x2 tile grid");
  }
  if (expected_tile && ts != *expected_tile) {
    throw DataError(path.string() + ": grid tile size " + std::to_string(ts) +
                    " does not match " + std::to_string(*expected_tile));
  }
  return MvGrid(ts, std::move(img.values));
}

}  // namespace gridedit
