#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lnkit {

enum class ErrorCode {
  InvalidArgument,
  OutOfBounds,
  Format,
  UnsupportedFormat,
  Consistency,
  Validation,
  NoLungFound,
  Manifest,
  Spec,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the toolkit carries one of the codes above so
/// callers (mainly the CLI) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures that originate in the filesystem or in file contents.
  bool is_io() const noexcept {
    return code_ == ErrorCode::Io || code_ == ErrorCode::Format ||
           code_ == ErrorCode::UnsupportedFormat || code_ == ErrorCode::Manifest;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace lnkit
