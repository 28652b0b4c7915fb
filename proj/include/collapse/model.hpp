#pragma once

// Conditional models for (Y, X, W): the covariate law f(w|x) together with
// the conditional mean, density (or pmf) and distribution function of Y given
// (x, w). Marginal quantities are obtained by mixing over W numerically.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "collapse/distributions.hpp"
#include "collapse/numerics.hpp"

namespace collapse {

/// Numerical settings shared by every model, measure and collapsibility
/// evaluation.
struct EvalConfig {
  QuadratureSpec quadrature{QuadratureMethod::AdaptiveSubdivision, 1e-13, 1e-11, 4000, 64};
  DiffSpec diff{1e-3, 2};
  /// Count marginals stop summing once this much mass is left.
  double count_tail = 1e-10;
  /// Hard cap on the count support visited by sums.
  int max_count = 100000;

  void validate() const;
};

enum class YKind { Continuous, Binary, Count };

std::string_view to_string(YKind kind);

/// W | X = x ~ Normal(mean(x), sd(x)^2). Declaring this form lets the
/// Gauss-Hermite rule replace adaptive quadrature for expectations over W.
struct GaussianForm {
  std::function<double(double)> mean;
  std::function<double(double)> sd;
};

struct CovariateLaw {
  /// f(w|x); ignored when point_mass is set.
  std::function<double(double w, double x)> density;
  /// Where f(w|x) may be positive.
  std::function<Interval(double x)> support;
  std::optional<GaussianForm> gaussian;
  /// Degenerate law W = m(x).
  std::function<double(double x)> point_mass;
  std::function<double(double x, Rng& rng)> sampler;

  /// Law whose distribution at each x is a fixed-parameter family.
  static CovariateLaw from_family(std::function<Family(double x)> family);
  static CovariateLaw normal(std::function<double(double)> mean, std::function<double(double)> sd);
  static CovariateLaw degenerate(std::function<double(double)> value);

  bool is_degenerate() const { return static_cast<bool>(point_mass); }
};

/// The y-support of f(y|x,w).
struct SupportRule {
  std::function<Interval(double x, double w)> bounds;
  /// true when the bounds move with (x, w).
  bool parametric = false;
  /// w-values at which y sits on a support boundary for the given x; the
  /// w-integrand of a mixture jumps there.
  std::function<std::vector<double>(double y, double x)> w_breakpoints;
};

struct ConditionalModel {
  std::string name;
  YKind y_kind = YKind::Continuous;
  /// Values of x at which the model is defined.
  Interval x_domain = Interval::real_line();
  CovariateLaw covariate;

  std::function<double(double x, double w)> mean_yxw;
  /// Density for continuous Y, probability mass for binary/count Y.
  std::function<double(double y, double x, double w)> density_yxw;
  SupportRule y_support;
  std::function<double(double y, double x, double w)> cdf_yxw;
  std::function<double(double x, double w, Rng& rng)> sampler_yxw;
  /// Support of the marginal f(y|x), when the y-support is parametric.
  std::function<Interval(double x)> marginal_y_support;

  bool has_mean() const { return static_cast<bool>(mean_yxw); }
  bool has_density() const { return static_cast<bool>(density_yxw); }
  bool has_cdf() const { return static_cast<bool>(cdf_yxw); }
  bool has_sampler() const { return static_cast<bool>(sampler_yxw); }

  /// Fills mean, density, cdf, sampler and support from a per-(x, w) family.
  void set_y_family(std::function<Family(double x, double w)> family);

  /// Support of Y at (x, w); the real line (or count range) when undeclared.
  Interval y_bounds(double x, double w) const;
  /// Support of the marginal Y at x.
  Interval marginal_y_bounds(double x) const;
  bool y_in_support(double y, double x, double w) const;
};

/// Registration checks: the covariate law integrates to one at each probe
/// x (1e-6), and when both mean and density are declared, E(Y|x,w) matches
/// the density's first moment (1e-6) at w = mean and mean +- sd/2 of W|x. Throws
/// Error(InvalidParams) naming the failed check; MissingCapability when
/// neither mean nor density is present.
void validate_model(const ConditionalModel& model, std::span<const double> probe_x,
                    const EvalConfig& cfg = {});

/// E[g(W) | X = x]. Uses Gauss-Hermite when the config asks for it and the
/// law declares a Gaussian form; adaptive quadrature over the support
/// otherwise. Breakpoints mark kinks or jumps of g.
EstimatedReal expect_over_w(const CovariateLaw& law, double x, const RealFunction& g,
                            const EvalConfig& cfg = {}, std::span<const double> breakpoints = {});

/// Mean and standard deviation of W | x, by quadrature.
std::pair<double, double> covariate_moments(const CovariateLaw& law, double x,
                                            const EvalConfig& cfg = {});

/// E(Y|x,w) from mean_yxw, or from the first moment of the density.
EstimatedReal conditional_mean(const ConditionalModel& model, double x, double w,
                               const EvalConfig& cfg = {});

/// F(y|x,w) from cdf_yxw, or by integrating/summing the density.
EstimatedReal conditional_cdf(const ConditionalModel& model, double y, double x, double w,
                              const EvalConfig& cfg = {});

/// E(Y|x) = E_{W|x}[E(Y|x,W)].
EstimatedReal marginal_mean(const ConditionalModel& model, double x, const EvalConfig& cfg = {});

/// f(y|x) = E_{W|x}[f(y|x,W) 1{y in support(x,W)}].
EstimatedReal marginal_density(const ConditionalModel& model, double y, double x,
                               const EvalConfig& cfg = {});

/// F(y|x) = E_{W|x}[F(y|x,W)].
EstimatedReal marginal_cdf(const ConditionalModel& model, double y, double x,
                           const EvalConfig& cfg = {});

/// P(Y = y | x) for binary or count Y.
EstimatedReal marginal_pmf(const ConditionalModel& model, long y, double x,
                           const EvalConfig& cfg = {});

/// P(Y = k | x) for k = 0, 1, ... up to the first index where the running
/// mass exceeds 1 - cfg.count_tail.
std::vector<double> marginal_pmf_table(const ConditionalModel& model, double x,
                                       const EvalConfig& cfg = {});

/// A joint density f(x, y, w) on a finite box, conditioned numerically.
struct JointDensitySpec {
  std::function<double(double x, double y, double w)> density;
  Interval x_box{-8.0, 8.0};
  Interval y_box{-8.0, 8.0};
  Interval w_box{-8.0, 8.0};
  /// Each axis starts out split into this many equal panels before adaptive
  /// refinement, so narrow features are not missed.
  int panels = 16;
  /// Tolerances for the outer w-integral; y-integrals run 100x tighter.
  QuadratureSpec quadrature{QuadratureMethod::AdaptiveSubdivision, 1e-13, 1e-10, 4000, 64};
};

/// Builds f(w|x) = f_XW(x,w)/f_X(x) and f(y|x,w) = f(x,y,w)/f_XW(x,w) by
/// quadrature over the box. Evaluations throw
/// DegenerateConditional where a conditioning density is below 1e-12.
ConditionalModel condition_from_joint(const JointDensitySpec& spec, std::string name = "joint");

/// f_X(x) f(w|x) f(y|x,w) reassembled from a conditioned model, for the
/// round-trip check. `marginal_x` is the x-marginal of the original joint.
double reassembled_joint(const ConditionalModel& model, const std::function<double(double)>& marginal_x,
                         double x, double y, double w);

/// d/dy log f(y|x,w), or d/dy log f(y|x) when w is absent. Steps shrink
/// near support boundaries; NonPositiveDensity if no stencil fits.
EstimatedReal log_density_slope_y(const ConditionalModel& model, double y, double x,
                                  std::optional<double> w, const EvalConfig& cfg = {});

/// d/dx log f(y|x,w), or d/dx log f(y|x) when w is absent.
EstimatedReal log_density_slope_x(const ConditionalModel& model, double y, double x,
                                  std::optional<double> w, const EvalConfig& cfg = {});

enum class HomogeneityQuantity { Mean, Density, LogDensitySlopeY, LogDensitySlopeX };

std::string_view to_string(HomogeneityQuantity q);

struct HomogeneityReport {
  HomogeneityQuantity quantity;
  double max_deviation = 0.0;
  double tolerance = 1e-6;
  bool homogeneous = true;
  /// Grid combinations skipped because y lay outside the support at w.
  int skipped = 0;
};

/// sup over the grid of |q(x, y, w) - q(x, y, w_ref)|, where w_ref is the
/// first w at which y is in the support. y_grid is ignored for Mean.
HomogeneityReport homogeneity_probe(const ConditionalModel& model, std::span<const double> x_grid,
                                    std::span<const double> y_grid, std::span<const double> w_grid,
                                    HomogeneityQuantity which, const EvalConfig& cfg = {},
                                    double tolerance = 1e-6);

}  // namespace collapse
