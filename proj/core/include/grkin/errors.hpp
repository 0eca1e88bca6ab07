#pragma once

#include <stdexcept>
#include <string>

namespace grkin {

enum class ErrorCode {
  EvenN,
  InvalidGrid,
  NonPositiveSample,
  AsymmetricProfile,
  NonPositiveRho,
  InvalidDeltaFraction,
  SingularOperator,
  SolveFailure,
  NewtonDiverged,
  StepFailed,
  NonZeroMean,
  DeltaOutOfRange,
  InsufficientData,
  NonPositiveValues,
  ParseError,
  ValidationError,
  IoError,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace grkin
