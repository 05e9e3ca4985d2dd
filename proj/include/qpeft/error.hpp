#pragma once

#include <stdexcept>
#include <string>

namespace qpeft {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A sequence exceeds a configured maximum length.
class LengthError : public Error {
public:
  using Error::Error;
};

/// NaN/Inf produced, or a loss could not be evaluated.
class NumericError : public Error {
public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
public:
  using Error::Error;
};

/// Malformed input file; the message carries the path and line number.
class ParseError : public Error {
public:
  using Error::Error;
};

}  // namespace qpeft
