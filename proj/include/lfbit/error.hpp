#pragma once

#include <stdexcept>
#include <string>

namespace lfbit {

enum class ErrorKind {
  invalid_argument,
  parse,
  io,
  infeasible,
  numerical,
  backend_process,
  backend_timeout,
  backend_stats,
};

/// Single exception type for the library; kind() drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind);

/// Process exit code for an error class. 0 is success, 1 is reserved for
/// unexpected failures and 2 for command-line usage errors.
int exit_code(ErrorKind kind);

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::invalid_argument, what);
}

}  // namespace lfbit
