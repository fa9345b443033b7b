#pragma once

#include <stdexcept>
#include <string>

namespace vamzls {

// Base of everything the library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Argument outside a function's mathematical domain.
struct DomainError : Error {
  using Error::Error;
};

// Problem with user-supplied data or model description.
struct DataError : Error {
  using Error::Error;
};

// Covariate with no spread; a basis cannot be placed on it.
struct DegenerateCovariateError : DataError {
  using DataError::DataError;
};

// Linear algebra or iteration failure inside a fit or test.
struct NumericalError : Error {
  using Error::Error;
};

// Moment-matching inputs are not positive, usually a null design block.
struct DegenerateTestError : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace vamzls
