#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "gridedit/mvgrid.hpp"

namespace gridedit::testing {

inline MvGrid random_grid(int tile, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  MvGrid g(tile);
  for (double& v : g.values()) v = u(eng);
  return g;
}

inline ViewImage random_view(int tile, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ViewImage v(tile);
  for (double& x : v.values()) x = u(eng);
  return v;
}

inline MvGrid normal_grid(int tile, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  MvGrid g(tile);
  for (double& v : g.values()) v = n(eng);
  return g;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::path(GRIDEDIT_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gridedit::testing
