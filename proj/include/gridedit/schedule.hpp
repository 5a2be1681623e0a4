#pragma once

#include <vector>

#include "gridedit/mvgrid.hpp"

namespace gridedit {

/// Descending noise times t_i = i / T for i = n_max .. 1 with a signed
/// step dt = -1 / T. Iterating over `times` ends at t_0 = 0.
struct TimeGrid {
  std::vector<double> times;
  double dt = 0.0;
  int total_steps = 0;
  int active_steps = 0;
};

TimeGrid make_schedule(int total_steps, int active_steps);

/// Rectified-flow interpolation (1 - t) x + t n. Data sits at t = 0,
/// noise at t = 1.
inline double add_noise(double x, double n, double t) { return (1.0 - t) * x + t * n; }

template <Raster T>
T add_noise(const T& x, const T& noise, double t) {
  require_same_shape(x, noise, "add_noise");
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("add_noise: t must lie in [0, 1]");
  T out = x;
  auto o = out.values();
  auto n = noise.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = add_noise(o[i], n[i], t);
  return out;
}

inline double euler_update(double x, double delta_v, double dt) { return x + delta_v * dt; }

template <Raster T>
T euler_update(const T& x, const T& delta_v, double dt) {
  require_same_shape(x, delta_v, "euler_update");
  T out = x;
  auto o = out.values();
  auto d = delta_v.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = euler_update(o[i], d[i], dt);
  return out;
}

}  // namespace gridedit
