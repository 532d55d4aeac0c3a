#include "grl/error.hpp"

namespace grl {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::AllZeroCounts: return "AllZeroCounts";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptyDistribution: return "EmptyDistribution";
    case ErrorKind::PlacementFailure: return "PlacementFailure";
    case ErrorKind::UnknownCategory: return "UnknownCategory";
    case ErrorKind::DegenerateObject: return "DegenerateObject";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::CorruptManifest: return "CorruptManifest";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

bool is_input_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::PlacementFailure:
    case ErrorKind::Io:
      return false;
    default:
      return true;
  }
}

}  // namespace grl
