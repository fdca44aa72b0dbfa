#pragma once

#include <stdexcept>
#include <string>

namespace qlayer {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// det(g) vanished: the parametrization is not an immersion at the point.
class ImmersionError : public Error {
 public:
  using Error::Error;
};

/// The layer would fold (J <= 0) somewhere on the evaluation grid.
class FoldError : public Error {
 public:
  using Error::Error;
};

/// A field's support escapes the quadrature grid or the truncated domain.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// An identity that must hold by construction was violated numerically.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// A transverse profile or discrete vector does not vanish on t = +-a.
class DirichletViolation : public Error {
 public:
  using Error::Error;
};

class ZeroNormError : public Error {
 public:
  using Error::Error;
};

/// Iterative method exhausted its budget; `best_residual` is what it reached.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class MemoryLimitError : public Error {
 public:
  using Error::Error;
};

/// The measured in-surface normal of the curve points against the direction.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

class MissingResultError : public Error {
 public:
  using Error::Error;
};

/// Config file or command-line problem; `line` is 0 for command-line
/// overrides and post-parse validation, `key` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0, std::string key = {})
      : Error(format(what, line, key)), line_(line), key_(std::move(key)) {}
  int line() const noexcept { return line_; }
  const std::string& key() const noexcept { return key_; }

 private:
  static std::string format(const std::string& what, int line, const std::string& key) {
    std::string where = line > 0 ? "config line " + std::to_string(line) : std::string();
    if (!key.empty()) where += where.empty() ? key : " (" + key + ")";
    return where.empty() ? what : where + ": " + what;
  }
  int line_;
  std::string key_;
};

}  // namespace qlayer
