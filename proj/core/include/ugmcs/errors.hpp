#pragma once

#include <stdexcept>

namespace ugmcs {

// Input violates an operation's preconditions (shape mismatch, bad range, ...).
struct invalid_input : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A file or dataset could not be read, parsed, or validated.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values appeared where finite math was required.
struct numeric_fault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace ugmcs
