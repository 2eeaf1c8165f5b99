#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace activemon {

enum class ErrorCode {
  // data
  BadMagic,
  CountMismatch,
  TruncatedFile,
  ParseError,
  ArityMismatch,
  OutOfRangeValue,
  EmptyKnownSet,
  // network
  EmptyDataset,
  ShapeMismatch,
  NotAnExtension,
  MissingClassData,
  // projection / clustering
  DegenerateData,
  TooFewPoints,
  // monitors
  UnknownClass,
  NotAWarningCase,
  ClassAlreadyKnown,
  // framework
  StreamExhausted,
  InsufficientData,
  // session / config
  IoError,
  MidAdaptation,
  VersionMismatch,
  CorruptSnapshot,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

// All recoverable failures in the library are reported as Error; the code
// lets callers (and tests) discriminate without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace activemon
