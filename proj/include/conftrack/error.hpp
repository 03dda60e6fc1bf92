#pragma once

#include <stdexcept>
#include <string>

namespace conftrack {

/// Failure category. The numeric value doubles as the CLI exit code.
enum class ErrorKind : int {
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kIo = 5,
};

/// Base for every error raised by the library. Carries the category so the
/// CLI can map it onto an exit status without knowing the concrete type.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

/// Inputs outside the mathematical domain of an operation (origin fed to the
/// conformal map, non-positive radius, ...).
struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// Malformed input file. `line` is 1-based; 0 when not line-specific.
struct ParseError : Error {
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(ErrorKind::kData, line ? what + " (line " + std::to_string(line) + ")" : what),
        line(line) {}
  std::size_t line;
};

/// Cross-record inconsistency: dangling ids, missing targets, mismatched events.
struct ConsistencyError : Error {
  explicit ConsistencyError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

struct IndexError : Error {
  explicit IndexError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// Object used in the wrong lifecycle state (tape reused, model not built).
struct StateError : Error {
  explicit StateError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// Least-squares design matrix is rank deficient or too ill-conditioned.
struct FitError : Error {
  FitError(const std::string& what, double condition)
      : Error(ErrorKind::kNumeric, what), condition(condition) {}
  double condition;
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

}  // namespace conftrack
