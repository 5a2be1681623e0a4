#include "gridedit/schedule.hpp"

#include <string>

namespace gridedit {

TimeGrid make_schedule(int total_steps, int active_steps) {
  if (total_steps < 1) throw ConfigError("schedule: total steps must be positive");
  if (active_steps < 1 || active_steps > total_steps) {
    throw ConfigError("schedule: active steps must lie in [1, " + std::to_string(total_steps) +
                      "], got " + std::to_string(active_steps));
  }
  TimeGrid grid;
  grid.total_steps = total_steps;
  grid.active_steps = active_steps;
  grid.dt = -1.0 / total_steps;
  grid.times.reserve(active_steps);
  for (int i = active_steps; i >= 1; --i) {
    grid.times.push_back(static_cast<double>(i) / total_steps);
  }
  return grid;
}

}  // namespace gridedit
