#pragma once

#include <stdexcept>
#include <string>

namespace caunet {

// Base for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/axis mismatch between tensors or between a tensor and an operation.
struct DimensionError : Error {
    using Error::Error;
};

// Structurally invalid configuration (bad channel counts, block sizes, ...).
struct ConfigError : Error {
    using Error::Error;
};

// A scalar parameter outside its documented range.
struct ParameterError : Error {
    using Error::Error;
};

// A violated call contract (non-scalar loss, non-binary mask, ...).
struct ContractError : Error {
    using Error::Error;
};

// Failure to decode an external file.
struct DecodeError : Error {
    using Error::Error;
};

} // namespace caunet
