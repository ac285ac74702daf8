#pragma once

#include <stdexcept>
#include <string>

namespace cpwloss {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value object violated one of its invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A nonlinear fit failed to converge or produced an unphysical answer.
class FitError : public Error {
 public:
  using Error::Error;
};

/// The field solver could not produce a converged solution.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file or record.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpwloss
