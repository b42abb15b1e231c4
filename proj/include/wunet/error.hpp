#pragma once

#include <stdexcept>
#include <string>

namespace wunet {

enum class ErrorKind {
  kShape,
  kInvalidArgument,
  kIo,
  kParse,
  kValidation,
  kCheckpoint,
  kNumeric,
};

// Single exception type for the library; the kind drives the C API status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_shape(const std::string& msg) {
  throw Error(ErrorKind::kShape, "shape error: " + msg);
}

[[noreturn]] inline void throw_invalid(const std::string& msg) {
  throw Error(ErrorKind::kInvalidArgument, msg);
}

}  // namespace wunet
