#pragma once

#include <stdexcept>
#include <string>

namespace pbens {

enum class ErrorKind {
  Shape,       // dimension mismatch between model, parameters and data
  Parameter,   // invalid scalar argument (non-positive variance, k == 0, ...)
  Numeric,     // factorization failure, degenerate samples
  Divergence,  // non-finite values during optimization
  Parse,       // malformed input file
  Config,      // invalid experiment configuration
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

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

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace pbens
