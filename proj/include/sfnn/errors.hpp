#pragma once

#include <stdexcept>
#include <string>

namespace sfnn {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or dimension disagreement between operands.
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// Numerical breakdown: non-finite values, indefinite matrices, NaN gradients.
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/// Malformed or inconsistent experiment configuration.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Dataset files missing, truncated, or malformed.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

} // namespace sfnn
