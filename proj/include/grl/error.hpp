#pragma once

#include <stdexcept>
#include <string>

namespace grl {

enum class ErrorKind {
  AllZeroCounts,
  DimensionMismatch,
  InvalidArgument,
  EmptyDistribution,
  PlacementFailure,
  UnknownCategory,
  DegenerateObject,
  TooFewPoints,
  NonFiniteInput,
  EmptyBatch,
  EmptySet,
  CorruptManifest,
  Io,
};

const char* to_string(ErrorKind kind);

// Errors a caller can fix by changing its input map to exit code 2 in the CLI.
bool is_input_error(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace grl
