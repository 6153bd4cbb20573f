#pragma once

#include <stdexcept>
#include <string>

namespace labelsweep {

// Every failure raised by the library. Messages start with a stable
// lowercase phrase ("bad magic", "coverage gap", ...) that callers and
// tests can match on.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace labelsweep
