// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fedpeft {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up for the requested operation.
struct ShapeError : Error {
    using Error::Error;
};

/// A NaN/Inf was produced or an argument is outside its numeric domain.
struct NumericError : Error {
    using Error::Error;
};

/// Malformed input data (JSONL records, fixtures, plans).
struct DataError : Error {
    using Error::Error;
};

/// Invalid experiment configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Partitioning could not satisfy its contract (empty nodes, calibration failure).
struct PartitionError : Error {
    using Error::Error;
};

} // namespace fedpeft
