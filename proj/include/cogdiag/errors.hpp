#pragma once

#include <stdexcept>
#include <string>

namespace cogdiag {

// Exit codes used by the CLI. Library code throws the typed exceptions
// below; the CLI maps them to these codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitDivergence = 4,
  kExitCheckpoint = 5,
};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible matrix/vector shapes.
struct DimensionError : Error {
  using Error::Error;
};

// Bad user-supplied configuration (rates, fractions, dims).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input file: missing columns, bad rows.
struct SchemaError : Error {
  using Error::Error;
};

// Structurally valid input that cannot be used (empty set, unknown id).
struct DataError : Error {
  using Error::Error;
};

// Training produced non-finite values.
struct DivergenceError : Error {
  using Error::Error;
};

// Unreadable, corrupt, or mismatched checkpoint.
struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace cogdiag
