#pragma once

// Average collapsibility over a split covariate W = (W1, W2) with
// W1 and W2 conditionally independent given X.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "collapse/collapsibility.hpp"
#include "collapse/model.hpp"

namespace collapse {

struct BivariateCovariateModel {
  std::string name;
  YKind y_kind = YKind::Continuous;
  Interval x_domain = Interval::real_line();
  CovariateLaw w1;
  CovariateLaw w2;

  std::function<double(double x, double w1, double w2)> mean_yxw;
  std::function<double(double y, double x, double w1, double w2)> density_yxw;
  /// Support of Y at (x, w1, w2); the real line when absent.
  std::function<Interval(double x, double w1, double w2)> y_bounds;

  /// The builder's claim that f(w1, w2 | x) = f(w1|x) f(w2|x).
  bool declares_factorization = true;
  /// Optional joint covariate density, checked against the product.
  std::function<double(double w1, double w2, double x)> joint_covariate;

  bool has_mean() const { return static_cast<bool>(mean_yxw); }
  bool has_density() const { return static_cast<bool>(density_yxw); }

  /// (Y, X, W2) with w1 held fixed, so measures at (x, w2) are the
  /// measures conditional on (x, w1, w2).
  ConditionalModel slice_at_w1(double w1) const;
  /// (Y, X, W2) with W1 integrated out under the factorization.
  ConditionalModel collapse_w1(const EvalConfig& cfg = {}) const;
  /// (Y, X, W1) with W2 integrated out under the factorization.
  ConditionalModel collapse_w2(const EvalConfig& cfg = {}) const;
};

struct SplitCovariateGrid {
  std::vector<double> x_points;
  std::vector<double> y_points;
  std::vector<double> w1_points;
  std::vector<double> w2_points;
  double tol_abs = 1e-5;
  double tol_rel = 1e-4;

  void validate() const;
  double tolerance(double reference) const;
};

/// Throws FactorizationViolated when the model does not declare
/// W1 independent of W2 given X, or when a declared joint covariate density
/// departs from the product by more than 1e-4 on the probe grid; throws
/// InvalidParams when either covariate law fails to integrate to one (1e-6).
void validate_bivariate(const BivariateCovariateModel& model, const SplitCovariateGrid& grid,
                        const EvalConfig& cfg = {});

enum class IntegrationOrder { W1Inner, W2Inner };

/// E_{W1,W2|x} of the measure conditional on (x, w1, w2), as an iterated
/// integral over the product law. For MDI only the mass where y is in the
/// support counts and `excluded` receives the rest.
EstimatedReal conditional_average_bivariate(MeasureKind measure, const BivariateCovariateModel& model,
                                            double x, std::optional<double> y,
                                            const EvalConfig& cfg = {},
                                            IntegrationOrder order = IntegrationOrder::W1Inner,
                                            double* excluded = nullptr);

/// EDF or MDI only. The verdict's `check` is "average-split".
CollapsibilityVerdict check_average_bivariate(MeasureKind measure, const BivariateCovariateModel& model,
                                              const SplitCovariateGrid& grid, const EvalConfig& cfg = {},
                                              const CheckOptions& options = {});

/// Probes on the grid:
///   w1_independent_of_w2_given_x     declared factorization (checked if a joint is given)
///   y_independent_of_w1_given_x_w2   f(y|x,w1,w2) (or the mean) constant in w1
///   x_independent_of_w2              f(w2|x) constant in x
///   y_independent_of_w1_given_x      f(y|x,w1) constant in w1
///   x_independent_of_w2_given_y      f(w2|x,y) constant in x
///   x_independent_of_w1_given_y      the x/y interchanged counterparts
///   y_independent_of_w2_given_x
std::vector<ConditionProbe> probe_conditions_bivariate(const BivariateCovariateModel& model,
                                                       const SplitCovariateGrid& grid,
                                                       const EvalConfig& cfg = {});

}  // namespace collapse
