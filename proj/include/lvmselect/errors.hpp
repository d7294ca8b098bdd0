#pragma once

#include <stdexcept>
#include <string>

namespace lvmselect {

/// Precondition or shape contract broken by the caller.
struct ContractViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A matrix that had to be positive definite was not.
struct DegenerateMatrix : std::runtime_error {
    double smallest_eigenvalue;
    DegenerateMatrix(const std::string& what, double smallest)
        : std::runtime_error(what + " (smallest eigenvalue " + std::to_string(smallest) + ")"),
          smallest_eigenvalue(smallest) {}
};

struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Pruning would remove every latent dimension.
struct ModelCollapsed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BoundaryMode : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ContractViolation(what);
}

}  // namespace lvmselect
