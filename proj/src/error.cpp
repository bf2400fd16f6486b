#include "dermalab/error.hpp"

namespace dermalab {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::MissingChannel: return "MissingChannel";
    case ErrorCode::PartialCoverage: return "PartialCoverage";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::InvalidCutoff: return "InvalidCutoff";
    case ErrorCode::OddOrder: return "OddOrder";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::InvalidTimeConstants: return "InvalidTimeConstants";
    case ErrorCode::SolverDiverged: return "SolverDiverged";
    case ErrorCode::ZeroDuration: return "ZeroDuration";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::TooManyFeatures: return "TooManyFeatures";
    case ErrorCode::EmptyBackground: return "EmptyBackground";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NegativeStatistic: return "NegativeStatistic";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace dermalab
