#pragma once

#include <stdexcept>
#include <string>

namespace gain {

// Raised when caller-supplied arguments violate an operation's contract
// (shape mismatches, out-of-range labels, unknown config keys, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when training produces a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace gain
