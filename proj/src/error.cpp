#include "segcurate/error.hpp"

namespace segcurate {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidMask: return "InvalidMask";
    case ErrorCode::RunSumMismatch: return "RunSumMismatch";
    case ErrorCode::InteriorZeroRun: return "InteriorZeroRun";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::InvalidGridSize: return "InvalidGridSize";
    case ErrorCode::RegionTooSmall: return "RegionTooSmall";
    case ErrorCode::InsufficientGold: return "InsufficientGold";
    case ErrorCode::MissingCategoryStats: return "MissingCategoryStats";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NoBackground: return "NoBackground";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::EmptyAfterIgnore: return "EmptyAfterIgnore";
    case ErrorCode::TargetOutOfVocab: return "TargetOutOfVocab";
    case ErrorCode::NonFiniteComponent: return "NonFiniteComponent";
    case ErrorCode::TooFewCandidates: return "TooFewCandidates";
    case ErrorCode::EmptyAccumulator: return "EmptyAccumulator";
    case ErrorCode::ZeroUnion: return "ZeroUnion";
    case ErrorCode::UnknownBucketLabel: return "UnknownBucketLabel";
    case ErrorCode::EmptyInstruction: return "EmptyInstruction";
    case ErrorCode::MissingCategory: return "MissingCategory";
    case ErrorCode::UnknownMode: return "UnknownMode";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::NonOkStatus: return "NonOkStatus";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::UnknownItem: return "UnknownItem";
    case ErrorCode::NotLeasedToYou: return "NotLeasedToYou";
    case ErrorCode::AlreadyDecided: return "AlreadyDecided";
    case ErrorCode::RubricVerdictMismatch: return "RubricVerdictMismatch";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace segcurate
