#pragma once

#include <stdexcept>
#include <string>

namespace dcnn {

/// Caller passed an argument that violates a documented precondition.
/// The CLI maps this to exit code 1.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data is malformed, out of range or otherwise unusable (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value (exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace detail
}  // namespace dcnn
