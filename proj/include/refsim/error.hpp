#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace refsim {

enum class ErrorKind {
  SingularMatrix,
  NotSymmetric,
  DimensionMismatch,
  RayTermination,
  PivotLimitExceeded,
  OutsideDomain,
  AdmissibilityViolated,
  NonpositiveDiagonal,
  CoefficientBoundViolated,
  CheckpointCorrupt,
  UnregisteredFunction,
  EmptyMeasure,
  ConfigMismatch,
  ParameterOutOfRange,
  MissingDerivative,
  SinksNotRegistered,
  ConfigError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::RayTermination: return "RayTermination";
    case ErrorKind::PivotLimitExceeded: return "PivotLimitExceeded";
    case ErrorKind::OutsideDomain: return "OutsideDomain";
    case ErrorKind::AdmissibilityViolated: return "AdmissibilityViolated";
    case ErrorKind::NonpositiveDiagonal: return "NonpositiveDiagonal";
    case ErrorKind::CoefficientBoundViolated: return "CoefficientBoundViolated";
    case ErrorKind::CheckpointCorrupt: return "CheckpointCorrupt";
    case ErrorKind::UnregisteredFunction: return "UnregisteredFunctionInStreamingMode";
    case ErrorKind::EmptyMeasure: return "EmptyMeasure";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::ParameterOutOfRange: return "ParameterOutOfRange";
    case ErrorKind::MissingDerivative: return "MissingDerivative";
    case ErrorKind::SinksNotRegistered: return "SinksNotRegistered";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace refsim
