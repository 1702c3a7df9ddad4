#pragma once

#include <stdexcept>
#include <string>

namespace rplgmr {

enum class ErrorCode {
  AllInvalid,
  DegenerateDepth,
  InvalidScene,
  SingularCovariance,
  EmptyKeptSet,
  TooFewSamples,
  CannotRestoreMonotonicity,
  AllComponentsEmpty,
  DegenerateScatter,
  DimensionMismatch,
  EmptyList,
  UnreadableInput,
  BadFormat,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::AllInvalid: return "AllInvalid";
    case ErrorCode::DegenerateDepth: return "DegenerateDepth";
    case ErrorCode::InvalidScene: return "InvalidScene";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::EmptyKeptSet: return "EmptyKeptSet";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::CannotRestoreMonotonicity: return "CannotRestoreMonotonicity";
    case ErrorCode::AllComponentsEmpty: return "AllComponentsEmpty";
    case ErrorCode::DegenerateScatter: return "DegenerateScatter";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::UnreadableInput: return "UnreadableInput";
    case ErrorCode::BadFormat: return "BadFormat";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable error code alongside the message.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  const char* code_name() const noexcept { return error_code_name(code_); }

private:
  ErrorCode code_;
};

}  // namespace rplgmr
