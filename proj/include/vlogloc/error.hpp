#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vlogloc {

enum class ErrorCode {
  // data errors
  MalformedTimestamp,
  UnorderedCues,
  ZeroDuration,
  UnknownCue,
  ConstantFrame,
  TooFewFrames,
  BadMagic,
  DimensionMismatch,
  DuplicateId,
  TruncatedFile,
  MissingEmbedding,
  MissingPrediction,
  EmptyInput,
  SingleClass,
  NoPositives,
  InsufficientPairs,
  Io,
  // numeric errors
  DegenerateChance,
  NumericFailure,
  // configuration errors
  Config,
};

std::string_view error_code_name(ErrorCode code);

// Process exit code a CLI run should end with when this error aborts it.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vlogloc
