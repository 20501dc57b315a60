#pragma once

#include <stdexcept>
#include <string>

namespace tcnd {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// Shape or length disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// API misuse: non-scalar loss, double backward, mutating a non-leaf.
class ContractError : public Error {
public:
    using Error::Error;
};

// NaN or Inf produced by a forward or backward pass.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid hyperparameters, schedules, or sweep/corpus configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Bad caller-supplied signal data (empty, too short, zero reference).
class InputError : public Error {
public:
    using Error::Error;
};

// Degenerate impulse response handed to the RT60 estimator.
class EstimationError : public Error {
public:
    using Error::Error;
};

// A source or corpus file could not be read.
class IngestionError : public Error {
public:
    IngestionError(const std::string& path, const std::string& reason)
        : Error(path + ": " + reason), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace tcnd
