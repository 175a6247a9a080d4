#pragma once

#include <stdexcept>
#include <string>

namespace glognn {

// Each family maps to a distinct CLI exit code (see tools/glognn.cpp).

/// Shape or argument contract violated by the caller.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values, singular systems, divergence.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Malformed or inconsistent dataset files.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration text or values.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace glognn
