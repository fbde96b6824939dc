#pragma once

#include <stdexcept>
#include <string>

namespace memesent {

// Bad or inconsistent input data: malformed files, schema violations,
// dimension mismatches, incompatible checkpoints.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Failures that happen while computing on valid data (e.g. divergence).
class RuntimeFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments or configuration values given by the caller.
class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

} // namespace memesent
