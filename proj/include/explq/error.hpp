#pragma once

#include <stdexcept>
#include <string>

namespace explq {

enum class ErrorKind {
  config = 1,      // malformed or incomplete input
  validation = 2,  // model violates a standing assumption
  numerical = 3,   // divergence, degeneracy, non-integrability
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
  [[nodiscard]] int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace explq
