#pragma once

#include <stdexcept>
#include <string>

namespace prunekit {

// Unreadable or malformed external input: dataset files, config files,
// checkpoints, sparse artifacts. The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure at runtime (non-finite loss, divergent update).
// The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace prunekit
