#include "navtoken/error.hpp"

#include <algorithm>

namespace navtoken {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicateAzimuth: return "DuplicateAzimuth";
    case ErrorCode::EmptyRig: return "EmptyRig";
    case ErrorCode::FieldOutOfRange: return "FieldOutOfRange";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RigMismatch: return "RigMismatch";
    case ErrorCode::NonMonotonicTimestep: return "NonMonotonicTimestep";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::InfeasibleCurve: return "InfeasibleCurve";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::BadDimension: return "BadDimension";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingArgument: return "MissingArgument";
    case ErrorCode::UnexpectedArgument: return "UnexpectedArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::PatchCountMismatch: return "PatchCountMismatch";
    case ErrorCode::BadPatchCount: return "BadPatchCount";
    case ErrorCode::BadTarget: return "BadTarget";
    case ErrorCode::MissingFeature: return "MissingFeature";
    case ErrorCode::PlanMismatch: return "PlanMismatch";
    case ErrorCode::EmbodimentMismatch: return "EmbodimentMismatch";
    case ErrorCode::EmptyActionList: return "EmptyActionList";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ZeroShortestPath: return "ZeroShortestPath";
    case ErrorCode::EmptyPath: return "EmptyPath";
    case ErrorCode::MissingFlags: return "MissingFlags";
    case ErrorCode::HorizonOutOfRange: return "HorizonOutOfRange";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::ChecksumFailure: return "ChecksumFailure";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace {

std::string format_message(ErrorCode code, const std::string& message) {
  std::string out(to_string(code));
  if (!message.empty()) {
    out += ": ";
    out += message;
  }
  return out;
}

std::string join_violations(const std::vector<ValidationError::Violation>& violations) {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += std::string(to_string(v.code)) + " (" + v.detail + ")";
  }
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(format_message(code, message)), code_(code) {}

ParseError::ParseError(std::size_t line, const std::string& message)
    : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + message), line_(line) {}

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error(violations.empty() ? ErrorCode::FieldOutOfRange : violations.front().code,
            join_violations(violations)),
      violations_(std::move(violations)) {}

bool ValidationError::has(ErrorCode code) const noexcept {
  return std::any_of(violations_.begin(), violations_.end(),
                     [code](const Violation& v) { return v.code == code; });
}

}  // namespace navtoken
