#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace primepatterns {

// Each kind maps to a distinct process exit code in the CLI.
enum class ErrorKind {
  invalid_parameter,
  domain,
  budget,
  cache_miss,
  io,
  unit,
  singular_fit,
  convergence,
  missing_window,
  empty_input,
  size,
};

std::string_view error_name(ErrorKind kind);
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace primepatterns
