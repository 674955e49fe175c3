#include "vlogloc/error.hpp"

namespace vlogloc {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedTimestamp: return "MalformedTimestamp";
    case ErrorCode::UnorderedCues: return "UnorderedCues";
    case ErrorCode::ZeroDuration: return "ZeroDuration";
    case ErrorCode::UnknownCue: return "UnknownCue";
    case ErrorCode::ConstantFrame: return "ConstantFrame";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::InsufficientPairs: return "InsufficientPairs";
    case ErrorCode::Io: return "Io";
    case ErrorCode::DegenerateChance: return "DegenerateChance";
    case ErrorCode::NumericFailure: return "NumericFailure";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config: return 2;
    case ErrorCode::DegenerateChance:
    case ErrorCode::NumericFailure: return 4;
    default: return 3;
  }
}

}  // namespace vlogloc
