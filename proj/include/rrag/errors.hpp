#pragma once

#include <stdexcept>
#include <string>

namespace rrag {

// Error categories map 1:1 onto CLI exit codes:
//   ConfigError -> 1, DataError -> 2, BackendError -> 3.

// Bad flags, bad config values, referenced paths missing at load.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or contract-violating input data (KB records, fixtures, eval rows).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Remote generation/judge service unreachable, non-200, or schema-invalid reply.
struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace rrag
