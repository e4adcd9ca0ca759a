#pragma once

#include <stdexcept>
#include <string>

namespace bae {

// Input outside an operation's mathematical domain (e.g. log of 0).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Caller violated a precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Shape mismatch between operands.
struct DimensionError : ContractError {
  using ContractError::ContractError;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf appeared during training or an iterative solve failed to converge.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bae
