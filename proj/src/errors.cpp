#include "collapse/errors.hpp"

namespace collapse {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorKind::StepUnderflow: return "StepUnderflow";
    case ErrorKind::NonPositiveDensity: return "NonPositiveDensity";
    case ErrorKind::DegenerateConditional: return "DegenerateConditional";
    case ErrorKind::NonPositiveMean: return "NonPositiveMean";
    case ErrorKind::DegenerateProbability: return "DegenerateProbability";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::Separation: return "Separation";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::MissingCapability: return "MissingCapability";
    case ErrorKind::Underdispersed: return "Underdispersed";
    case ErrorKind::FactorizationViolated: return "FactorizationViolated";
    case ErrorKind::UnknownScenario: return "UnknownScenario";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorKind::ArityMismatch: return "ArityMismatch";
    case ErrorKind::EvaluationError: return "EvaluationError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::UsageError: return "UsageError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_numerical(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonConvergence:
    case ErrorKind::NonFiniteEvaluation:
    case ErrorKind::StepUnderflow:
    case ErrorKind::NonPositiveDensity:
    case ErrorKind::DegenerateConditional:
    case ErrorKind::NonPositiveMean:
    case ErrorKind::DegenerateProbability:
    case ErrorKind::RankDeficient:
    case ErrorKind::Separation:
    case ErrorKind::NotConverged:
    case ErrorKind::EvaluationError:
      return true;
    default:
      return false;
  }
}

}  // namespace collapse
