#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rmfgl {

enum class ErrorCode {
  NegativeWeight,
  ResetAboveBase,
  NonPositiveRate,
  BadDimension,
  SupportBelowFloor,
  RegionOutOfBounds,
  MTooSmall,
  IntensityOverflow,
  HorizonNonPositive,
  DecayNotSupported,
  InsufficientPaths,
  NoConvergence,
  GridTooShort,
  GridMismatch,
  InputHorizonMismatch,
  LatticeMismatch,
  NotStationary,
  ConfigInvalid,
  OutputDirNotEmpty,
  IncompleteRun,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// All failures raised by the library carry a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rmfgl
