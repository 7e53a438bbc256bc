#include "rmfgl/error.hpp"

namespace rmfgl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::ResetAboveBase: return "ResetAboveBase";
    case ErrorCode::NonPositiveRate: return "NonPositiveRate";
    case ErrorCode::BadDimension: return "BadDimension";
    case ErrorCode::SupportBelowFloor: return "SupportBelowFloor";
    case ErrorCode::RegionOutOfBounds: return "RegionOutOfBounds";
    case ErrorCode::MTooSmall: return "MTooSmall";
    case ErrorCode::IntensityOverflow: return "IntensityOverflow";
    case ErrorCode::HorizonNonPositive: return "HorizonNonPositive";
    case ErrorCode::DecayNotSupported: return "DecayNotSupported";
    case ErrorCode::InsufficientPaths: return "InsufficientPaths";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::GridTooShort: return "GridTooShort";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::InputHorizonMismatch: return "InputHorizonMismatch";
    case ErrorCode::LatticeMismatch: return "LatticeMismatch";
    case ErrorCode::NotStationary: return "NotStationary";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::OutputDirNotEmpty: return "OutputDirNotEmpty";
    case ErrorCode::IncompleteRun: return "IncompleteRun";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace rmfgl
