#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ptt {

enum class ErrorKind {
  Contract,           // dimension mismatch, index out of range, bad argument
  EmptyAttentionRow,  // a query has no valid key
  Numerical,          // iteration cap reached, non-finite value
  DegenerateGeometry, // Procrustes covariance rank < 2
  Config,             // invalid configuration
  Data,               // unreadable or empty input data
  Load,               // malformed weight file
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; the kind decides how callers react
/// (the CLI maps it to an exit code).
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

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::Contract, message);
}

}  // namespace ptt
