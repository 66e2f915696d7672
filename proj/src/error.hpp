#pragma once

#include <stdexcept>
#include <string>

namespace npad {

// Mirrors npad_status in the C header; values must stay in sync.
enum class ErrorCode : int {
  Io = 1,
  Format = 2,
  Truncated = 3,
  UnknownDType = 4,
  InvalidArgument = 5,
  ShapeMismatch = 6,
  Validation = 7,
  Numerical = 8,
  Config = 9,
  Internal = 10,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace npad
