#pragma once

// Simulation from the linear, logistic, Poisson and negative binomial
// regression models, in-house OLS/IRLS fitters, and a coefficient-level
// average-collapsibility check of the slope on x.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "collapse/collapsibility.hpp"
#include "collapse/distributions.hpp"
#include "collapse/model.hpp"

namespace collapse {

enum class RegressionFamily { Linear, Logistic, Poisson, NegBin };

std::string_view to_string(RegressionFamily family);
RegressionFamily regression_family_from_string(std::string_view text);

/// W takes one of `levels`, with P(W = levels[k] | x) = probabilities(x)[k].
struct DiscreteCovariate {
  std::vector<double> levels;
  std::function<std::vector<double>(double x)> probabilities;
};

/// Conditional model behind a simulation:
///   linear    Y = eta + N(0, noise_sd^2)
///   logistic  P(Y=1) = 1/(1+exp(-eta))
///   poisson   Y ~ Poisson(exp(eta))
///   negbin    Y ~ Poisson(exp(alpha + beta x) W) with W ~ Gamma(theta, theta);
///             the covariate scheme is ignored and gamma is unused
/// where eta = alpha + beta x + gamma w, or alpha(w) + beta(w) x when the
/// stratum maps are given (discrete W only; entries follow the levels).
struct RegressionSpec {
  std::string name = "regression";
  RegressionFamily family = RegressionFamily::Linear;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  std::vector<double> alpha_by_level;
  std::vector<double> beta_by_level;
  std::variant<DiscreteCovariate, CovariateLaw> covariate;
  double theta = 1.0;
  double noise_sd = 1.0;

  /// Throws InvalidParams on a malformed spec; `at_x` are the x values at
  /// which discrete probabilities are checked to sum to one.
  void validate(std::span<const double> at_x = {}) const;
  bool discrete() const { return std::holds_alternative<DiscreteCovariate>(covariate); }
  bool stratified() const { return !beta_by_level.empty(); }
  double linear_predictor(double x, double w) const;
};

struct Dataset {
  std::vector<double> y;
  std::vector<double> x;
  std::vector<double> w;
  std::string spec_name;
  std::uint64_t seed = 0;

  std::size_t size() const { return y.size(); }
};

/// Draws x ~ x_law, then w | x, then y | (x, w). Deterministic per seed.
Dataset simulate(const RegressionSpec& spec, std::size_t n, const Family& x_law, Seed seed);

/// CSV with header `y,x,w`.
void write_csv(const Dataset& data, std::ostream& out);
/// Throws IoError on a bad header or row.
Dataset read_csv(std::istream& in);

struct FitResult {
  /// (intercept, x) or (intercept, x, w).
  std::vector<double> coefficients;
  std::vector<double> std_errors;
  int iterations = 0;
  bool converged = false;
  double log_likelihood = 0.0;
  /// Largest absolute score component at the solution.
  double score_norm = 0.0;
  /// NB dispersion used by the fit.
  std::optional<double> theta;

  double slope() const { return coefficients.at(1); }
  double slope_se() const { return std_errors.at(1); }
};

/// OLS of y on (1, x) or (1, x, w). Throws RankDeficient.
FitResult fit_linear(const Dataset& data, bool include_w);

struct GlmOptions {
  int max_iterations = 100;
  double score_tol = 1e-8;
  /// Added to the linear predictor of every row.
  std::vector<double> offset;
};

/// IRLS for the logistic or Poisson family. Throws Separation when the
/// logistic coefficients diverge, NotConverged after max_iterations, and
/// RankDeficient for a singular design.
FitResult fit_glm(const Dataset& data, RegressionFamily family, bool include_w,
                  const GlmOptions& options = {});

/// Moment estimate of the NB dispersion from a Poisson fit of y on x:
/// theta = sum mu^2 / sum((y - mu)^2 - mu). Throws Underdispersed when the
/// denominator is not positive.
double moment_theta(const Dataset& data);

/// Log-link NB regression of y on (1, x) at a fixed theta (the moment
/// estimate when theta is absent).
FitResult fit_negbin(const Dataset& data, std::optional<double> theta = std::nullopt,
                     const GlmOptions& options = {});

struct BetaPoint {
  double x = 0.0;
  /// E_{W|x}(beta(W)), or the common conditional beta.
  double conditional = 0.0;
  double marginal = 0.0;
  double gap = 0.0;
  /// 3 times the combined standard error.
  double tolerance = 0.0;
  bool within = false;
};

struct BetaVerdict {
  std::string spec_name;
  RegressionFamily family = RegressionFamily::Linear;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  Classification classification = Classification::Indeterminate;
  FitResult marginal;
  /// One fit per level for a discrete W, else a single joint fit.
  std::vector<FitResult> conditional;
  std::vector<double> levels;
  std::vector<BetaPoint> points;
  /// E_W(beta(W)) under the empirical level frequencies.
  std::optional<double> unconditional_average;
  /// Every conditional slope has one sign beyond 3 SE and the marginal slope
  /// the other.
  bool reversal = false;
};

/// Simulates n records, fits the conditional and marginal models and compares
/// E_{W|x}(beta(W)) with the marginal slope at each probe x. Strata need at
/// least 50 records (InvalidParams otherwise).
BetaVerdict check_beta_collapsibility(const RegressionSpec& spec, std::size_t n, const Family& x_law,
                                      Seed seed, std::span<const double> x_probe_points);

}  // namespace collapse
