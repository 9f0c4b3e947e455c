#pragma once

#include <stdexcept>
#include <string>

namespace gandistill {

// Exception hierarchy. The CLI maps each family onto an exit code.

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dataset, manifest or shard problems (missing files, checksum mismatch).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite losses, failed matrix square roots.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gandistill
