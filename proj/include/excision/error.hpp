#pragma once

#include <stdexcept>
#include <string>

namespace excision {

/// Root of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// A file did not match its expected schema (missing column, bad row, ...).
class SchemaError : public InvalidParameter {
 public:
  using InvalidParameter::InvalidParameter;
};

/// A named dataset or resource could not be resolved.
class LookupError : public InvalidParameter {
 public:
  using InvalidParameter::InvalidParameter;
};

/// Numerical failure: unstable integration, non-PD gram matrix, nonstationary AR pair.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A least-squares or regression problem was rank-deficient.
class SingularFit : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidParameter(what);
}

}  // namespace detail
}  // namespace excision
