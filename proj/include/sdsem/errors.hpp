#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sdsem {

enum class ErrorCode {
  DimensionMismatch,
  NotPositiveDefinite,
  FactorizationFailure,
  InnovationCovSingular,
  NonFiniteSample,
  BlockStructureViolation,
  EmptyChain,
  ChainDiverged,
  SingularObsCov,
  ZeroWithinVariance,
  EmptyCluster,
  RankDeficientLoadings,
  NonFiniteForecast,
  AlignmentMismatch,
  NonPositiveValue,
  SchemaError,
  GapInTimeIndex,
  UnknownSiteInAdjacency,
  InvalidAdjacency,
  ConfigError,
  IoError,
  UsageError,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::InnovationCovSingular: return "InnovationCovSingular";
    case ErrorCode::NonFiniteSample: return "NonFiniteSample";
    case ErrorCode::BlockStructureViolation: return "BlockStructureViolation";
    case ErrorCode::EmptyChain: return "EmptyChain";
    case ErrorCode::ChainDiverged: return "ChainDiverged";
    case ErrorCode::SingularObsCov: return "SingularObsCov";
    case ErrorCode::ZeroWithinVariance: return "ZeroWithinVariance";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::RankDeficientLoadings: return "RankDeficientLoadings";
    case ErrorCode::NonFiniteForecast: return "NonFiniteForecast";
    case ErrorCode::AlignmentMismatch: return "AlignmentMismatch";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::GapInTimeIndex: return "GapInTimeIndex";
    case ErrorCode::UnknownSiteInAdjacency: return "UnknownSiteInAdjacency";
    case ErrorCode::InvalidAdjacency: return "InvalidAdjacency";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

/// Every module reports failures through this type; `code()` is stable and
/// is what the command-line tool emits in its error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace sdsem
