#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crd {

enum class ErrorCode {
  InvalidArgument,
  MissingColumn,
  NonNumericCell,
  EmptyFile,
  ShapeMismatch,
  TooFewSamples,
  SingularRegression,
  SchemaVersionUnsupported,
  CorruptFile,
  UnstableSpec,
  ScheduleOutOfRange,
  RegimeOutOfRange,
  RangeError,
  NumericalFailure,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::SingularRegression: return "SingularRegression";
    case ErrorCode::SchemaVersionUnsupported: return "SchemaVersionUnsupported";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::UnstableSpec: return "UnstableSpec";
    case ErrorCode::ScheduleOutOfRange: return "ScheduleOutOfRange";
    case ErrorCode::RegimeOutOfRange: return "RegimeOutOfRange";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

/// Every failure raised by the engine carries one of the codes above so the
/// CLI can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Internal numerical trouble is the only non-validation failure.
constexpr bool is_validation_error(ErrorCode code) { return code != ErrorCode::NumericalFailure; }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace crd
