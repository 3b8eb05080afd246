#pragma once

#include <stdexcept>
#include <string>

namespace abacus {

// Shape mismatches: incompatible broadcasts, bad ranks, bad axes.
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Values outside a function's or distribution's domain of definition.
struct DomainError : std::domain_error {
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// API misuse: wrong objective kind, duplicate node names, unknown lookups.
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Non-finite data where finite values are required (e.g. gradients fed to Adam).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace abacus
