#pragma once

#include <stdexcept>
#include <string>

namespace seqkit {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension or rank mismatch; message names the offending shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid model or training configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Input resolution incompatible with the model's downsampling.
struct ResolutionError : Error {
    using Error::Error;
};

// Invalid argument value (bad axis list, bad label, empty sequence).
struct ValueError : Error {
    using Error::Error;
};

// File or stream failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace seqkit
