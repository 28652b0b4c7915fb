#pragma once

// The catalog of worked examples: each scenario pairs a model with its
// closed-form truths and a list of expected checks, and can be run to a
// report of pass/fail records.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "collapse/collapsibility.hpp"
#include "collapse/multivariate.hpp"
#include "collapse/regression.hpp"

namespace collapse {

/// Where the reference value of a check comes from.
enum class Origin { ClosedForm, Oracle, Identity };

std::string_view to_string(Origin origin);

enum class CheckStatus { Pass, Fail, Indeterminate, Reported };

std::string_view to_string(CheckStatus status);

struct ClosedForm {
  std::string name;
  /// Arguments the formula reads, e.g. "x" or "y,x".
  std::string arguments;
  std::string formula;
  std::function<double(double x, double y)> evaluate;
};

struct ExpectedCheck {
  std::string name;
  std::string description;
  Origin origin = Origin::ClosedForm;
  /// Expected verdict or value, as text.
  std::string expected;
  double tolerance = 0.0;
  /// Reported for documentation; does not affect the scenario outcome.
  bool informational = false;
};

struct CheckRecord {
  std::string name;
  std::string description;
  Origin origin = Origin::ClosedForm;
  std::string expected;
  CheckStatus status = CheckStatus::Indeterminate;
  /// Worst-case comparison for value checks; NaN when not applicable.
  double observed;
  double reference;
  double gap;
  double tolerance;
  std::string note;
  std::optional<CollapsibilityVerdict> verdict;
  std::vector<ConditionProbe> probes;
  std::optional<ReversalReport> reversal;
  std::optional<BetaVerdict> regression;

  CheckRecord();
};

struct RunOptions {
  std::uint64_t seed = 0;
  /// GaussHermite applies to Gaussian covariate laws only.
  std::optional<QuadratureMethod> quadrature;
  /// Replace the x or y points of the main collapsibility check.
  std::optional<std::vector<double>> x_points;
  std::optional<std::vector<double>> y_points;
  std::optional<double> tol_abs;
  std::optional<double> tol_rel;
  /// Scenario parameters such as lambda or theta; unknown names are rejected.
  std::map<std::string, double> parameters;
  int threads = 0;
};

struct ScenarioReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::map<std::string, double> parameters;
  std::vector<CheckRecord> checks;

  /// Fail if any asserted check failed, else Indeterminate if any could not be
  /// computed, else Pass.
  CheckStatus overall() const;
  bool passed() const { return overall() == CheckStatus::Pass; }
};

enum class ModelKind { Conditional, Bivariate, Regression };

std::string_view to_string(ModelKind kind);

struct Scenario {
  std::string name;
  std::string description;
  ModelKind kind = ModelKind::Conditional;
  bool stochastic = false;
  std::map<std::string, double> parameters;
  std::vector<ClosedForm> closed_forms;
  std::vector<ExpectedCheck> expected;
  /// Grid of the main collapsibility check and of the condition probes.
  GridSpec grid;

  /// Present for ModelKind::Conditional (and the conditional view of the
  /// regression scenario).
  std::function<ConditionalModel(const std::map<std::string, double>&)> conditional_model;
  std::function<BivariateCovariateModel()> bivariate_model;
  std::function<std::vector<CheckRecord>(const Scenario&, const RunOptions&)> runner;

  const ClosedForm& closed_form(std::string_view name) const;
};

/// The fixed catalog, in a stable order.
const std::vector<Scenario>& catalog();

/// Throws Error(UnknownScenario).
const Scenario& find_scenario(std::string_view name);

/// Runs every expected check; throws UnknownScenario, or InvalidParams for an
/// unknown parameter override.
ScenarioReport run_scenario(std::string_view name, const RunOptions& options = {});

/// Canonical text of the catalog's names, closed forms and expectations.
std::string catalog_fingerprint();
/// FNV-1a of catalog_fingerprint().
std::uint64_t catalog_checksum();

}  // namespace collapse
