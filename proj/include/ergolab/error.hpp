#pragma once

#include <stdexcept>
#include <string>

namespace ergolab {

enum class ErrorCode {
  InvalidArgument,
  OutOfRange,
  Parse,
  Unsupported,
  InsufficientPrecision,
  Domain,
  Io,
};

// Single exception type for the library; the code drives the C API mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace ergolab
