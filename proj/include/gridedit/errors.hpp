#pragma once

#include <stdexcept>
#include <string>

namespace gridedit {

/// Mismatched tile counts, image dimensions, or buffer lengths.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values (schedule, guidance, training, presets).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable or malformed files and datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model produced a non-finite value. `step` is the schedule step (or
/// training epoch) at which it was detected, -1 when not applicable.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int step = -1)
      : std::runtime_error(what), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace gridedit
