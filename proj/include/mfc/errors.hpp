#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfc {

/// Invalid configuration: bad parameters, non-monotone setpoints, misaligned windows.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A simulated state or control became non-finite.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error("diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

} // namespace mfc
