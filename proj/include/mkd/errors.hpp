#pragma once

#include <stdexcept>
#include <string>

namespace mkd {

/// Base class for every exception thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read, or written.
struct IoError : Error {
  using Error::Error;
};

/// Malformed numeric content in an input file.
/// row/col are 1-based; 0 means "not applicable" (e.g. a syntax error
/// reported by the JSON parser before any element was reached).
struct ParseError : Error {
  ParseError(const std::string& msg, long row_, long col_)
      : Error(msg + " (row " + std::to_string(row_) + ", col " +
              std::to_string(col_) + ")"),
        row(row_),
        col(col_) {}
  long row = 0;
  long col = 0;
};

/// Structurally inconsistent input (ragged rows, size mismatch).
struct ShapeError : Error {
  using Error::Error;
};

/// Dataset with zero rows or zero columns.
struct EmptyError : Error {
  using Error::Error;
};

/// Two operands with incompatible dimensions.
struct DimensionError : Error {
  using Error::Error;
};

/// Argument outside its documented domain (tolerances, levels, parameters).
struct DomainError : Error {
  using Error::Error;
};

/// Operation requires model structure the given object does not carry
/// (e.g. parameter derivatives of a score kernel built from a bare score).
struct ModelKindError : Error {
  using Error::Error;
};

/// Score function failed or returned a non-finite value.
struct ScoreError : Error {
  using Error::Error;
};

/// Matrix numerically singular where an invertible one is required.
struct SingularError : Error {
  SingularError(const std::string& msg, double min_eigenvalue_)
      : Error(msg + " (min eigenvalue " + std::to_string(min_eigenvalue_) + ")"),
        min_eigenvalue(min_eigenvalue_) {}
  double min_eigenvalue = 0.0;
};

/// Objective or statistic evaluated to NaN or infinity.
struct NonFiniteError : Error {
  using Error::Error;
};

/// A quantity that must be bounded away from zero collapsed (e.g. a
/// witness normalizer below tolerance because the two samples coincide).
struct DegenerateError : Error {
  using Error::Error;
};

}  // namespace mkd
