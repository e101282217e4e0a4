#pragma once

#include <stdexcept>
#include <string>

namespace quisg {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file (JSON syntax, bad binary container).
struct ParseError : Error {
  using Error::Error;
};

// Structurally valid input that violates a data invariant.
struct ValidationError : Error {
  using Error::Error;
};

// Shape-incompatible tensor operation; message names the primitive.
struct DimensionError : Error {
  using Error::Error;
};

// A primitive produced NaN or Inf.
struct NumericError : Error {
  using Error::Error;
};

// Missing named record, or a record with the wrong shape.
struct LookupError : Error {
  using Error::Error;
};

// Token sequence exceeds the configured maximum length.
struct TruncationError : Error {
  using Error::Error;
};

// Answer span refers to tokens absent from the alignment map.
struct UnmappableSpanError : Error {
  using Error::Error;
};

// Caller broke an operation's stated precondition.
struct PreconditionError : Error {
  using Error::Error;
};

// Bad command line usage (maps to exit code 1 in the CLI).
struct UsageError : Error {
  using Error::Error;
};

}  // namespace quisg
