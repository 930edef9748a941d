#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bmpc {

enum class ErrorCode {
  SchemaMismatch,
  NonMonotonicTime,
  GapTooLarge,
  ValueOutOfRange,
  NonIntegerRatio,
  NotEnoughData,
  MissingChannel,
  TooShort,
  MissingSupplyTemperature,
  UnstableStep,
  MaxIterationsExceeded,
  FeatureDimensionMismatch,
  DimensionMismatch,
  Diverged,
  ForecastTooShort,
  NonConvexCost,
  LowerBoundRequested,
  SingularDesign,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
  switch (code) {
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::GapTooLarge: return "GapTooLarge";
    case ErrorCode::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorCode::NonIntegerRatio: return "NonIntegerRatio";
    case ErrorCode::NotEnoughData: return "NotEnoughData";
    case ErrorCode::MissingChannel: return "MissingChannel";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::MissingSupplyTemperature: return "MissingSupplyTemperature";
    case ErrorCode::UnstableStep: return "UnstableStep";
    case ErrorCode::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorCode::FeatureDimensionMismatch: return "FeatureDimensionMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::ForecastTooShort: return "ForecastTooShort";
    case ErrorCode::NonConvexCost: return "NonConvexCost";
    case ErrorCode::LowerBoundRequested: return "LowerBoundRequested";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string & what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
  {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace bmpc
