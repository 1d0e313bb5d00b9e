#pragma once

#include <stdexcept>
#include <string>

namespace ionphase {

/// Base class for all library errors that are not plain precondition
/// violations (those throw std::invalid_argument).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The truncated Fock basis cannot represent the requested state or
/// operator to the requested accuracy.
struct TruncationError : Error {
  using Error::Error;
};

/// Halving the integrator step changed the result beyond tolerance.
struct StepSizeError : Error {
  using Error::Error;
};

/// A fit failed to converge and cannot produce a usable estimate.
struct NonConvergenceError : Error {
  using Error::Error;
};

/// A measurement record carries no information about the fit parameters.
struct DegenerateDataError : Error {
  using Error::Error;
};

/// Adjacent phase samples are separated by >= pi after unwrapping, so the
/// branch assignment is ambiguous.
struct UnwrapAmbiguityError : Error {
  using Error::Error;
};

/// The data does not constrain the requested parameters (e.g. a flat
/// interference fringe).
struct UnidentifiableError : Error {
  using Error::Error;
};

/// Configuration file is malformed or violates the schema.
struct ConfigError : Error {
  using Error::Error;
};

/// File could not be read, written, or parsed.
struct IoError : Error {
  using Error::Error;
};

}  // namespace ionphase
