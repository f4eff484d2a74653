#pragma once

#include <stdexcept>
#include <string>

namespace mmfuse {

// Dimension or layout mismatch; message names both shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input data: malformed files, duplicate ids, missing modalities.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Draw larger than the available pool.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite arithmetic is required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Text whose tokens are all out of vocabulary.
struct EmptyTextError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mmfuse
