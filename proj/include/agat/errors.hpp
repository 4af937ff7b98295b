#pragma once

#include <stdexcept>
#include <string>

namespace agat {

// Process exit codes used by the CLI.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitDependency = 3,
    kExitNumeric = 4,
};

// Bad flags, bad config keys, malformed values.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// A required upstream artifact (dataset, run directory, mask directory) is missing.
struct DependencyError : std::runtime_error {
    explicit DependencyError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or gradient during training.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched grid shapes, invalid sizes.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace agat
