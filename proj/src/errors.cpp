#include "evego/errors.hpp"

namespace evego {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::NegativeTimestamp: return "NegativeTimestamp";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SideMismatch: return "SideMismatch";
    case ErrorCode::MissingWrist: return "MissingWrist";
    case ErrorCode::SampleCountMismatch: return "SampleCountMismatch";
    case ErrorCode::TapeExhausted: return "TapeExhausted";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

}  // namespace evego
