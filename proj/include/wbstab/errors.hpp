#pragma once

#include <stdexcept>
#include <string>

namespace wbstab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Well-formed input that violates a model or configuration invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class UnknownFrameError : public Error {
 public:
  explicit UnknownFrameError(const std::string& name) : Error("unknown frame '" + name + "'") {}
};

/// Contact Jacobian without full row rank.
class RankDeficientError : public Error {
 public:
  explicit RankDeficientError(double min_singular_value)
      : Error("contact Jacobian is rank deficient (smallest singular value " +
              std::to_string(min_singular_value) + ")"),
        min_singular_value_(min_singular_value) {}
  double min_singular_value() const { return min_singular_value_; }

 private:
  double min_singular_value_;
};

/// A stabilizer QP had no feasible point.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// A solved QP failed its iteration limit, KKT or equality residual checks.
class QpCheckError : public Error {
 public:
  using Error::Error;
};

}  // namespace wbstab
