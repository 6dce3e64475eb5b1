#include "eigenclt/error.hpp"

namespace eigenclt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::CollidingState: return "CollidingState";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::MaxSubstepsExceeded: return "MaxSubstepsExceeded";
    case ErrorCode::InvalidInit: return "InvalidInit";
    case ErrorCode::MismatchedModels: return "MismatchedModels";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegreeOverflow: return "DegreeOverflow";
    case ErrorCode::DegreeMissing: return "DegreeMissing";
    case ErrorCode::NoNoiseRecorded: return "NoNoiseRecorded";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::BadScale: return "BadScale";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace eigenclt
