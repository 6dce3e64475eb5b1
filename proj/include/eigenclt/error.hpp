#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eigenclt {

enum class ErrorCode {
  UnknownKind,
  InvalidParams,
  CollidingState,
  NonFinite,
  MaxSubstepsExceeded,
  InvalidInit,
  MismatchedModels,
  GridMismatch,
  TooLarge,
  NoConvergence,
  DegreeOverflow,
  DegreeMissing,
  NoNoiseRecorded,
  NotPSD,
  MissingInput,
  TooFewSamples,
  BadScale,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (CLI, Python bindings, tests) can branch on the kind of failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace eigenclt
