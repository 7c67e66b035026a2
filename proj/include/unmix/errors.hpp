#pragma once

#include <stdexcept>
#include <string>

namespace unmix {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/extent disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid or inconsistent configuration (divisibility, ranges, unknown profile).
struct ConfigError : Error {
    using Error::Error;
};

// API contract violation (e.g. backward on a non-scalar).
struct ContractError : Error {
    using Error::Error;
};

// File container problems: bad magic, truncated payload, unparseable header.
struct FormatError : Error {
    using Error::Error;
};

// Degenerate or rank-deficient input data.
struct DataError : Error {
    using Error::Error;
};

// Non-finite values, failed optimization, conditioning failures.
struct NumericalError : Error {
    using Error::Error;
};

// Synthetic scene generation could not satisfy its constraints.
struct GenerationError : Error {
    using Error::Error;
};

}  // namespace unmix
