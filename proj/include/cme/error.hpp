#pragma once

#include <stdexcept>
#include <string>

namespace cme {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatch, NaN inputs, empty point sets.
class InputError : public Error {
public:
    using Error::Error;
};

/// Factorization failure or round-off beyond the documented tolerances.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Invalid learner or experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Invalid probabilistic model (non-stochastic matrix, no stationary law).
class ModelError : public Error {
public:
    using Error::Error;
};

/// Well-formed request that the implementation does not support.
class UnsupportedInputError : public Error {
public:
    using Error::Error;
};

}  // namespace cme
