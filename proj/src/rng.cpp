#include "gridedit/rng.hpp"

namespace gridedit {
namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed, StreamTag tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

}  // namespace

NoiseStream::NoiseStream(std::uint64_t seed, StreamTag tag) : engine_(seeded_engine(seed, tag)) {}

void NoiseStream::fill_normal(std::span<double> out) {
  for (double& v : out) v = normal_(engine_);
}

std::size_t NoiseStream::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace gridedit
