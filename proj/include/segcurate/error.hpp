#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segcurate {

// Every failure the library reports carries one of these codes. The names are
// stable and appear verbatim in JSON error reports and CLI output.
enum class ErrorCode {
  InvalidArgument,
  InvalidMask,
  RunSumMismatch,
  InteriorZeroRun,
  EmptyMask,
  InvalidGridSize,
  RegionTooSmall,
  InsufficientGold,
  MissingCategoryStats,
  ShapeMismatch,
  NoBackground,
  OutOfRange,
  EmptyAfterIgnore,
  TargetOutOfVocab,
  NonFiniteComponent,
  TooFewCandidates,
  EmptyAccumulator,
  ZeroUnion,
  UnknownBucketLabel,
  EmptyInstruction,
  MissingCategory,
  UnknownMode,
  Transport,
  NonOkStatus,
  ParseFailure,
  UnknownItem,
  NotLeasedToYou,
  AlreadyDecided,
  RubricVerdictMismatch,
  InvalidFraction,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace segcurate
