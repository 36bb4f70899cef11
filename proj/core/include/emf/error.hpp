#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emf {

enum class ErrorCode {
  InvalidArgument,
  IndexOutOfRange,
  ShapeMismatch,
  NonFinite,
  DuplicateEntry,
  EmptyObservations,
  SingularDesign,
  RankDeficient,
  DegenerateInit,
  CapExceeded,
  DenominatorTooSmall,
  ParseError,
  RaggedRows,
  EmptyFile,
  SentinelCollision,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. `code()` is stable and machine
/// readable; `what()` carries the human-oriented detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace emf
