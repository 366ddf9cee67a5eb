#pragma once

#include <stdexcept>
#include <string>

namespace slicesim {

/// Invalid experiment input (config file, preset mutation, oversized state
/// space). The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical breakdown: solver non-convergence, divergent training loss.
/// The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace slicesim
