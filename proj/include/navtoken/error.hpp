#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace navtoken {

enum class ErrorCode {
  // core
  DuplicateAzimuth,
  EmptyRig,
  FieldOutOfRange,
  ParseError,
  RigMismatch,
  NonMonotonicTimestep,
  // bats
  BudgetTooSmall,
  NonConvergence,
  InfeasibleCurve,
  // tvi
  OddDimension,
  BadDimension,
  ShapeMismatch,
  MissingArgument,
  UnexpectedArgument,
  IoError,
  VersionMismatch,
  // organizer
  PatchCountMismatch,
  BadPatchCount,
  BadTarget,
  MissingFeature,
  PlanMismatch,
  // trajectory
  EmbodimentMismatch,
  EmptyActionList,
  InsufficientData,
  // metrics
  ZeroShortestPath,
  EmptyPath,
  MissingFlags,
  HorizonOutOfRange,
  EmptySet,
  // cache
  DimensionMismatch,
  NotFound,
  ChecksumFailure,
  DuplicateKey,
  // harness
  ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

// All failures surface as navtoken::Error. The code is stable and is what
// callers (and the CLI exit-code mapping) switch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures carry the 1-based line number of the offending record, or 0
// when the input as a whole is unusable (e.g. empty).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message);

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Validation that reports every violated invariant at once.
class ValidationError : public Error {
 public:
  struct Violation {
    ErrorCode code;
    std::string detail;
  };

  explicit ValidationError(std::vector<Violation> violations);

  const std::vector<Violation>& violations() const noexcept { return violations_; }
  bool has(ErrorCode code) const noexcept;

 private:
  std::vector<Violation> violations_;
};

}  // namespace navtoken
