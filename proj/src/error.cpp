#include "nsde/error.hpp"

namespace nsde {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::BlockSizeMismatch: return "BlockSizeMismatch";
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::NegativeAlpha: return "NegativeAlpha";
    case ErrorCode::Explosion: return "Explosion";
    case ErrorCode::InvalidSubsteps: return "InvalidSubsteps";
    case ErrorCode::DegenerateDiffusion: return "DegenerateDiffusion";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::BoundsViolation: return "BoundsViolation";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::NonPSD: return "NonPSD";
    case ErrorCode::ZeroWeight: return "ZeroWeight";
    case ErrorCode::MissingValidationLoss: return "MissingValidationLoss";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
    case ErrorCode::EmptyPanel: return "EmptyPanel";
    case ErrorCode::IrregularSpacing: return "IrregularSpacing";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace nsde
