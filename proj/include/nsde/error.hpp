#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nsde {

/// Failure categories raised by the library. Every thrown nsde::Error carries one.
enum class ErrorCode {
  IndexOutOfRange,
  SelfLoop,
  DuplicateEdge,
  InvalidProbability,
  BlockSizeMismatch,
  NonSquare,
  DimensionMismatch,
  LayoutMismatch,
  NonFiniteState,
  NegativeAlpha,
  Explosion,
  InvalidSubsteps,
  DegenerateDiffusion,
  NonConvergence,
  BoundsViolation,
  SingularGram,
  NonPSD,
  ZeroWeight,
  MissingValidationLoss,
  InsufficientData,
  ParseError,
  NonMonotoneTimestamps,
  EmptyPanel,
  IrregularSpacing,
  DomainError,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nsde
