#pragma once

#include <stdexcept>
#include <string>

namespace softnet {

enum class ErrorKind {
  shape,
  index,
  contract,
  config,
  data,
  protocol,
  format,
  io,
  invariant,
  degenerate,
  numeric,
  report,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so the CLI can map it
/// onto a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

/// Process exit code for a given error kind. 0 is reserved for success.
int exit_code(ErrorKind kind);

}  // namespace softnet
