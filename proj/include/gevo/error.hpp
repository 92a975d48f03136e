#pragma once

#include <stdexcept>
#include <string>

namespace gevo {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Genome or config value violates a structural invariant.
struct ValidationError : Error {
    using Error::Error;
};

// Malformed file or byte stream.
struct FormatError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

// NaN/Inf produced by a kernel op.
struct NumericError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace gevo
