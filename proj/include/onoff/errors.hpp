#pragma once

#include <stdexcept>
#include <string>

namespace onoff {

// Malformed input: bad model file, bad pattern, inconsistent arguments.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A size guard tripped (history enumeration, LP tableau).
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Floating point breakdown such as a belief losing all its mass.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A constructed object failed its own invariants. Always a bug.
class InternalConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace onoff
