#pragma once

#include <stdexcept>
#include <string>

namespace dmap {

/// Bad arguments or a violated precondition.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A file could not be opened, decoded, or written.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input data failed validation (schema, ranges, malformed records).
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok)
    throw InvalidArgument(message);
}

} // namespace detail
} // namespace dmap
