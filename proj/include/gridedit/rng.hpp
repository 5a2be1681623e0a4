#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "gridedit/mvgrid.hpp"

namespace gridedit {

/// Named purposes keep streams drawn from the same user seed independent.
enum class StreamTag : std::uint32_t {
  kGridNoise = 1,
  kCondNoise = 2,
  kTraining = 3,
  kInit = 4,
  kScene = 5,
  kEval = 6,
};

/// Seeded standard-normal / uniform source. Same (seed, tag) -> same draws.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, StreamTag tag);

  void fill_normal(std::span<double> out);
  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  template <Raster T>
  T normal_like(const T& shape) {
    T out = shape;
    fill_normal(out.values());
    return out;
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace gridedit
