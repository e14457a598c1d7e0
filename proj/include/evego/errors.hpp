#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace evego {

enum class ErrorCode {
  OutOfBounds,
  NegativeTimestamp,
  IndexOutOfRange,
  GeometryMismatch,
  IoError,
  ParseError,
  InvariantViolation,
  NonFinite,
  ShapeMismatch,
  SideMismatch,
  MissingWrist,
  SampleCountMismatch,
  TapeExhausted,
  ConfigError,
  MissingFile,
  Usage,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  // Offending element (event index, training step, ...) when one applies.
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

}  // namespace evego
