#pragma once

#include <stdexcept>
#include <string>

namespace fbm {

// Raised when a caller breaks a documented precondition (bad shape, action out
// of bounds, empty input, ...). The CLI maps it to exit code 1.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised for malformed command lines and config files. The CLI maps it to exit
// code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace fbm
