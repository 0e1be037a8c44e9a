#pragma once

#include <stdexcept>
#include <string>

namespace copyseq {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes (messages name both shapes).
struct DimensionError : Error {
  using Error::Error;
};

// Numerically invalid input, e.g. log of a nonpositive value.
struct DomainError : Error {
  using Error::Error;
};

// Out-of-range id in a lookup.
struct IndexError : Error {
  using Error::Error;
};

// A softmax row with no unmasked entry.
struct MaskError : Error {
  using Error::Error;
};

// Bad user-facing configuration (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// Checkpoint/config mismatch.
struct VersionError : Error {
  using Error::Error;
};

}  // namespace copyseq
