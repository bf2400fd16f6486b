#pragma once

#include <stdexcept>
#include <string>

namespace dermalab {

enum class ErrorCode {
  MalformedRow,
  NonMonotonicTime,
  EmptyFile,
  MissingChannel,
  PartialCoverage,
  EmptyWindow,
  InvalidCutoff,
  OddOrder,
  TooShort,
  NonFiniteInput,
  RateMismatch,
  DegenerateInput,
  InvalidTimeConstants,
  SolverDiverged,
  ZeroDuration,
  TooFewRows,
  DegenerateTarget,
  EmptyData,
  ArityMismatch,
  TooManyFeatures,
  EmptyBackground,
  TooFewGroups,
  EmptyGroup,
  LengthMismatch,
  NegativeStatistic,
  InvalidSpec,
  InvalidArgument,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dermalab
