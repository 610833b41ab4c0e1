#pragma once

#include <stdexcept>
#include <string>

namespace bgld {

enum class ErrorCode {
  MalformedHeader,
  MalformedInput,
  DimensionMismatch,
  NonFiniteValue,
  IoFailure,
  EmptyGroup,
  OutOfDomain,
  MissingNeighbor,
  GroupMismatch,
  InvalidRule,
  NotPositiveDefinite,
  Diverged,
  SingularSystem,
  InsufficientData,
  ShapeMismatch,
  WindowTooLarge,
  MaskedPixel,
  ModelMissing,
  MonthOutOfRange,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace bgld
