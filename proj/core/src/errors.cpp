#include "grkin/errors.hpp"

namespace grkin {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EvenN: return "EvenN";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::NonPositiveSample: return "NonPositiveSample";
    case ErrorCode::AsymmetricProfile: return "AsymmetricProfile";
    case ErrorCode::NonPositiveRho: return "NonPositiveRho";
    case ErrorCode::InvalidDeltaFraction: return "InvalidDeltaFraction";
    case ErrorCode::SingularOperator: return "SingularOperator";
    case ErrorCode::SolveFailure: return "SolveFailure";
    case ErrorCode::NewtonDiverged: return "NewtonDiverged";
    case ErrorCode::StepFailed: return "StepFailed";
    case ErrorCode::NonZeroMean: return "NonZeroMean";
    case ErrorCode::DeltaOutOfRange: return "DeltaOutOfRange";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NonPositiveValues: return "NonPositiveValues";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace grkin
