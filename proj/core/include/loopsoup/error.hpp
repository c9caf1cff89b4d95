#pragma once

#include <stdexcept>
#include <string>

namespace loopsoup {

/// Input violates a documented precondition (bad document, unknown label,
/// parameter out of range). Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what);
};

/// A numerical computation could not be carried out (singular matrix,
/// divergent series, truncation overflow). Maps to CLI exit code 2.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what);
};

}  // namespace loopsoup
