#pragma once

// Quadrature and numerical differentiation. Everything here is a pure
// function of its arguments and safe to call from several threads.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace collapse {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// An integration or differentiation domain. Either end may be infinite.
struct Interval {
  double lower = -kInf;
  double upper = kInf;

  static Interval real_line() { return {-kInf, kInf}; }
  static Interval positive() { return {0.0, kInf}; }

  bool is_finite() const { return std::isfinite(lower) && std::isfinite(upper); }
  bool contains(double t) const { return t > lower && t < upper; }
  bool contains_closed(double t) const { return t >= lower && t <= upper; }
  double width() const { return upper - lower; }

  /// Throws Error(InvalidParams) unless lower < upper.
  void validate() const;
};

enum class QuadratureMethod { AdaptiveSubdivision, GaussHermite };

struct QuadratureSpec {
  QuadratureMethod method = QuadratureMethod::AdaptiveSubdivision;
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  int max_subdivisions = 2000;
  int hermite_nodes = 64;

  void validate() const;
};

struct DiffSpec {
  double base_step = std::cbrt(std::numeric_limits<double>::epsilon());
  int richardson_levels = 2;

  void validate() const;
};

/// A computed real with an advisory error estimate and the number of
/// integrand/function evaluations spent on it.
struct EstimatedReal {
  double value = 0.0;
  double err_estimate = 0.0;
  long evaluations = 0;
};

using RealFunction = std::function<double(double)>;
using BivariateFunction = std::function<double(double, double)>;

/// Adaptive Gauss-Kronrod (7/15) integration with global bisection.
/// Infinite ends are mapped to a finite range: (-inf, inf) via
/// t = u/(1-u^2), half-lines via t = a + u/(1-u). Only
/// QuadratureMethod::AdaptiveSubdivision is meaningful here; the
/// Gauss-Hermite method applies to gauss_hermite_expectation.
///
/// Throws NonConvergence when max_subdivisions bisections do not reach
/// max(abs_tol, rel_tol*|value|), and NonFiniteEvaluation when f returns
/// NaN or an infinity.
EstimatedReal integrate(const RealFunction& f, Interval domain, const QuadratureSpec& spec = {});

/// Same, with interior points where the integrand may have a kink or a
/// jump. Points outside the open domain are ignored.
EstimatedReal integrate(const RealFunction& f, Interval domain, std::span<const double> breakpoints,
                        const QuadratureSpec& spec = {});

/// Composite Gauss-Legendre rule on a finite interval with a fixed node
/// set. The result is a smooth function of any parameters captured by f,
/// which matters when it is differentiated numerically afterwards. The error
/// estimate compares against the same rule on half as many panels.
EstimatedReal integrate_fixed(const RealFunction& f, Interval domain, int panels, int order = 10);

/// E[g(Z)] for Z ~ Normal(mean, sd^2) by Gauss-Hermite quadrature with
/// spec.hermite_nodes nodes. Exact for polynomials of degree
/// < 2*hermite_nodes. err_estimate is the difference from the rule with
/// half the nodes (plus a rounding floor).
EstimatedReal gauss_hermite_expectation(const RealFunction& g, double mean, double sd,
                                        const QuadratureSpec& spec = {});

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Probabilists' normalization: sum_i w_i g(x_i) approximates E[g(Z)],
/// Z ~ N(0,1). Cached per node count.
const QuadratureRule& hermite_rule(int nodes);

/// Gauss-Legendre on [-1, 1]. Cached per order.
const QuadratureRule& legendre_rule(int order);

/// f'(at) by central differences with Richardson extrapolation. The finest
/// step is base_step*max(1,|at|) and each coarser level doubles it. When
/// `domain` is given and the symmetric stencil leaves it, a one-sided stencil
/// is used instead, and the step is halved until some stencil fits
/// (StepUnderflow otherwise).
EstimatedReal differentiate(const RealFunction& f, double at, const DiffSpec& spec = {},
                            std::optional<Interval> domain = std::nullopt);

struct StencilSteps {
  double x = 0.0;
  double y = 0.0;
};

/// d^2/dxdy of log f at (at_x, at_y) from the symmetric four-point stencil,
/// Richardson-extrapolated in the common step ratio. `steps` gives the finest
/// step per axis; the default is base_step^(3/4)*max(1,|at|), since second
/// differences amplify rounding more than first ones. The stencil is summed
/// as (f++ + f--) - (f+- + f-+), so swapping the roles of x and y reproduces
/// the same value bit for bit. Throws NonPositiveDensity when f <= 0 at a
/// node.
EstimatedReal mixed_partial(const BivariateFunction& f, double at_x, double at_y,
                            const DiffSpec& spec = {},
                            std::optional<StencilSteps> steps = std::nullopt);

/// Standard normal density and distribution function.
double normal_pdf(double z);
double normal_cdf(double z);

}  // namespace collapse
