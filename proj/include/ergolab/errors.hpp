// errors.hpp
// Exception taxonomy shared by all ergolab modules.

#pragma once

#include <stdexcept>
#include <string>

namespace ergolab {

// Operator/state dimensions do not match or are unsupported.
class InvalidDimensionError : public std::invalid_argument {
public:
    explicit InvalidDimensionError(const std::string& what)
        : std::invalid_argument(what) {}
};

// An input violates a documented precondition (non-Hermitian matrix,
// non-normalized state, probabilities outside [0,1], ...).
class ContractViolationError : public std::invalid_argument {
public:
    explicit ContractViolationError(const std::string& what)
        : std::invalid_argument(what) {}
};

// A run configuration is inconsistent (missing Pauli terms, zero shots, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what)
        : std::runtime_error(what) {}
};

} // namespace ergolab
