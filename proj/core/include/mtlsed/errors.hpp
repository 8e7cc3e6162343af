#pragma once

#include <stdexcept>
#include <string>

namespace mtlsed {

/// Raised when caller-supplied input violates a documented precondition
/// (out-of-range config value, malformed file, shape mismatch). The CLI maps
/// this to exit code 1; every other exception maps to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace mtlsed
