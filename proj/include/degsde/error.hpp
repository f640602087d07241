#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace degsde {

enum class ErrorKind {
  ParseError,
  UnknownVariable,
  UnknownFunction,
  ArityError,
  DomainError,
  UnknownModel,
  DimensionMismatch,
  DivergenceProbeFailed,
  QuadratureFailure,
  CalibrationFailure,
  DegenerateSlice,
  MissingSigmaTilde,
  NonFiniteState,
  NonMonotone,
  ZeroDiffusion,
  InvalidArgument,
  ConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownVariable: return "UnknownVariable";
    case ErrorKind::UnknownFunction: return "UnknownFunction";
    case ErrorKind::ArityError: return "ArityError";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::UnknownModel: return "UnknownModel";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DivergenceProbeFailed: return "DivergenceProbeFailed";
    case ErrorKind::QuadratureFailure: return "QuadratureFailure";
    case ErrorKind::CalibrationFailure: return "CalibrationFailure";
    case ErrorKind::DegenerateSlice: return "DegenerateSlice";
    case ErrorKind::MissingSigmaTilde: return "MissingSigmaTilde";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::NonMonotone: return "NonMonotone";
    case ErrorKind::ZeroDiffusion: return "ZeroDiffusion";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` distinguishes failure modes.
/// Parse errors additionally carry the byte offset into the source string.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::size_t offset = npos)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        offset_(offset) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }
  bool has_offset() const noexcept { return offset_ != npos; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  ErrorKind kind_;
  std::size_t offset_;
};

/// Numerical codes are aborts (exit 3 in the CLI); everything else is a usage error.
inline bool is_numerical(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFiniteState:
    case ErrorKind::QuadratureFailure:
    case ErrorKind::CalibrationFailure:
    case ErrorKind::DivergenceProbeFailed:
    case ErrorKind::DomainError:
    case ErrorKind::NonMonotone:
    case ErrorKind::ZeroDiffusion:
    case ErrorKind::DegenerateSlice:
      return true;
    default:
      return false;
  }
}

}  // namespace degsde
