#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "gridedit/mvgrid.hpp"

namespace gridedit {

/// [-1, +1] -> byte, round half up, clamped to [0, 255].
std::uint8_t encode_value(double v) noexcept;
double decode_value(std::uint8_t p) noexcept;

void write_png(const std::filesystem::path& path, const ViewImage& view);
void write_png(const std::filesystem::path& path, const MvGrid& grid);

/// Reads a square view. Grayscale files are replicated to RGB; an alpha
/// channel is dropped. Throws DataError on unreadable files or when the
/// size differs from `expected_tile`.
ViewImage read_view(const std::filesystem::path& path,
                    std::optional<int> expected_tile = std::nullopt);

/// Reads a 3x2 grid; the tile size is inferred from the width.
MvGrid read_grid(const std::filesystem::path& path,
                 std::optional<int> expected_tile = std::nullopt);

}  // namespace gridedit
