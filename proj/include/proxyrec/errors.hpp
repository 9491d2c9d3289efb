#pragma once

#include <stdexcept>
#include <string>

namespace proxyrec {

// Shape / dimension mismatch between operands.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad hyper-parameter or configuration value.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced where finite values are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse (e.g. backward from a non-scalar, stepping without grads).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Dataset-level problems (empty result, insufficient sampling pool, ...).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; message carries the line number.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace proxyrec
