#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace randscat {

/// Failure categories shared by every module. The CLI maps these onto exit
/// codes, the batch drivers record them per sample.
enum class ErrorKind {
  NonPositiveRadius,
  GridTooCoarse,
  QuadratureTooCoarse,
  NegativeCoefficient,
  InvalidMode,
  EmptyBasis,
  SingularSystem,
  LineSearchFailed,
  IllConditioned,
  TooFewSamples,
  InsufficientModes,
  NonPositiveEigenvalue,
  DegenerateDesign,
  DegenerateSlope,
  AllRejected,
  InvalidArgument,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonPositiveRadius: return "NonPositiveRadius";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::QuadratureTooCoarse: return "QuadratureTooCoarse";
    case ErrorKind::NegativeCoefficient: return "NegativeCoefficient";
    case ErrorKind::InvalidMode: return "InvalidMode";
    case ErrorKind::EmptyBasis: return "EmptyBasis";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::LineSearchFailed: return "LineSearchFailed";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::InsufficientModes: return "InsufficientModes";
    case ErrorKind::NonPositiveEigenvalue: return "NonPositiveEigenvalue";
    case ErrorKind::DegenerateDesign: return "DegenerateDesign";
    case ErrorKind::DegenerateSlope: return "DegenerateSlope";
    case ErrorKind::AllRejected: return "AllRejected";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace randscat
