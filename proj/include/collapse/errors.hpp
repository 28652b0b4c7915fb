#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace collapse {

/// Every failure the library reports carries one of these kinds.
enum class ErrorKind {
  // numerical
  NonConvergence,
  NonFiniteEvaluation,
  StepUnderflow,
  NonPositiveDensity,
  DegenerateConditional,
  NonPositiveMean,
  DegenerateProbability,
  RankDeficient,
  Separation,
  NotConverged,
  // model / input
  InvalidParams,
  MissingCapability,
  Underdispersed,
  FactorizationViolated,
  UnknownScenario,
  // expression language
  SyntaxError,
  UnknownIdentifier,
  ArityMismatch,
  EvaluationError,
  // front end
  ConfigError,
  UsageError,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// True for kinds that signal a breakdown of the numerics rather than bad
/// input. The CLI maps these to the "indeterminate" exit code.
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Expression parse failures (SyntaxError, UnknownIdentifier, ArityMismatch)
/// carry the byte offset of the offending token.
class ParseError : public Error {
 public:
  ParseError(ErrorKind kind, std::size_t offset, const std::string& message)
      : Error(kind, message + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace collapse
