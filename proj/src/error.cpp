#include "lfbit/error.hpp"

namespace lfbit {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::infeasible: return "infeasible problem";
    case ErrorKind::numerical: return "numerical failure";
    case ErrorKind::backend_process: return "encoder process failed";
    case ErrorKind::backend_timeout: return "encoder timeout";
    case ErrorKind::backend_stats: return "malformed encoder stats";
  }
  return "unknown error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return 3;
    case ErrorKind::parse: return 4;
    case ErrorKind::io: return 5;
    case ErrorKind::infeasible: return 6;
    case ErrorKind::numerical: return 7;
    case ErrorKind::backend_process: return 8;
    case ErrorKind::backend_timeout: return 9;
    case ErrorKind::backend_stats: return 10;
  }
  return 1;
}

}  // namespace lfbit
