#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bnpci {

// Base class for everything thrown by this library on bad input or bad data.
// Programming errors (violated preconditions that code controls, not data)
// use std::invalid_argument instead.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A point lies outside the partition's domain ([0,1]^d for dyadic trees).
struct DomainError : Error {
  using Error::Error;
};

// A point could not be mapped through a quantile transform (NaN/inf input).
struct TransformDomainError : DomainError {
  using DomainError::DomainError;
};

// Requested tree depth cannot be addressed by the index representation.
struct DepthOverflowError : Error {
  using Error::Error;
};

// Problems with input data: CSV structure, missing columns, degenerate
// columns, length mismatches, values outside the unit interval, ...
struct DataError : Error {
  using Error::Error;
};

// Every row of a CSV file was dropped by the missing/non-finite filter.
// Kept as its own type so callers can choose prior-reversion instead of
// aborting.
struct AllRowsDroppedError : DataError {
  explicit AllRowsDroppedError(std::size_t dropped)
      : DataError("all " + std::to_string(dropped) +
                  " data rows were dropped (missing or non-finite values)"),
        dropped_rows(dropped) {}
  std::size_t dropped_rows;
};

}  // namespace bnpci
