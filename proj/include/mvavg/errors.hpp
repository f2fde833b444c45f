#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvavg {

/// Step size exceeds the explicit-Euler stability bound of the stiff drift.
class StabilityError : public std::invalid_argument {
 public:
  StabilityError(const std::string& what, double bound)
      : std::invalid_argument(what), bound_(bound) {}
  double bound() const noexcept { return bound_; }

 private:
  double bound_;
};

/// A state component became NaN or infinite during integration.
class NonFiniteStateError : public std::runtime_error {
 public:
  NonFiniteStateError(const std::string& what, std::size_t particle, double time)
      : std::runtime_error(what), particle_(particle), time_(time) {}
  std::size_t particle() const noexcept { return particle_; }
  double time() const noexcept { return time_; }

 private:
  std::size_t particle_;
  double time_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mvavg
