#pragma once

#include <stdexcept>
#include <string>

namespace ablate {

// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad inputs: mismatched grids, unreadable files, invalid configuration.
// The CLI maps these to exit code 2.
struct ValidationError : Error {
    using Error::Error;
};

// Numerical failure: degenerate similarity, non-finite intermediate results.
// The CLI maps these to exit code 3.
struct NumericError : Error {
    using Error::Error;
};

} // namespace ablate
