#pragma once

#include <stdexcept>
#include <string>

namespace crossview {

// Error taxonomy shared by the library and the CLI exit codes:
// usage -> 2, io/data -> 3, config/dimension -> 4, numeric -> 5.

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (manifests, descriptor files, truth maps).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/dimension mismatch between operands.
struct DimError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace crossview
