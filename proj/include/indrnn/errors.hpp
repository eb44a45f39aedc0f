#pragma once

#include <stdexcept>
#include <string>

namespace indrnn {

// Shape/dimension violations detected eagerly at operation entry.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-finite values, overflow, singular matrices.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Experiment configuration problems (bad fields, unknown keys, invalid specs).
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Dataset ingestion problems (missing files, bad magic, truncation).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace indrnn
