#pragma once

#include <stdexcept>
#include <string>

namespace cmlab {

// Raised for malformed configuration (unknown keys, bad ranges, unreadable
// files). The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a computation goes numerically bad (non-finite loss, degenerate
// weights). The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised for unreadable, truncated, corrupt, or version-mismatched checkpoints.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cmlab
