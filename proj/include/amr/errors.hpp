#pragma once

#include <stdexcept>
#include <string>

namespace amr {

/// Malformed input document (bad JSON, missing or mistyped field).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input parsed but violates a model invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix or vector dimensions passed between modules.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Singular solve, non-Hurwitz system, non-finite values and the like.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace amr
