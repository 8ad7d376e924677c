#pragma once

#include <stdexcept>
#include <string>

namespace dkf {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible vector/matrix dimensions.
struct DimensionError : Error {
  using Error::Error;
};

/// A model definition violates its own contract (e.g. a noise covariance
/// that cannot be factored).
struct ModelError : Error {
  using Error::Error;
};

/// A runtime linear-algebra failure (e.g. an innovation covariance that is
/// not positive definite).
struct NumericalError : Error {
  using Error::Error;
};

/// A caller broke an API contract (e.g. fusion weights off the simplex).
struct ContractError : Error {
  using Error::Error;
};

/// Scenario-file parse or schema violation.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace dkf
