#pragma once

#include <stdexcept>
#include <string>

namespace agcn {

// Base for everything thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes incompatible with an operation.
struct ShapeError : Error {
    using Error::Error;
};

// A precondition on values was violated (empty dataset, bad root, ...).
struct ContractError : Error {
    using Error::Error;
};

// Invalid configuration value or malformed config/spec file.
struct ConfigError : Error {
    using Error::Error;
};

// Object used in a state that does not permit the call.
struct StateError : Error {
    using Error::Error;
};

// File / parse problems, message carries the line number where known.
struct IoError : Error {
    using Error::Error;
};

// NaN/Inf encountered while running (training abort, exit code 2 in the CLI).
struct NumericError : Error {
    using Error::Error;
};

}  // namespace agcn
