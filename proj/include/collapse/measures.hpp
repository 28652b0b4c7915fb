#pragma once

// Association measures between X and Y, conditional on W = w or marginal
// over W. Marginal measures always differentiate the mixed quantity.

#include <optional>
#include <string_view>

#include "collapse/model.hpp"

namespace collapse {

enum class MeasureKind { EDF, MDI, LED, DDF, MDIBinary };

std::string_view to_string(MeasureKind kind);
/// Accepts "edf", "mdi", "led", "ddf" and "mdi-binary" (case-insensitive).
MeasureKind measure_from_string(std::string_view text);
/// MDI and DDF are evaluated at a y value.
bool needs_y(MeasureKind kind);

struct MeasurePoint {
  double x = 0.0;
  std::optional<double> y;
  /// Absent for the marginal measure.
  std::optional<double> w;
};

/// dE(Y|x,w)/dx, or dE(Y|x)/dx when w is absent.
EstimatedReal edf(const ConditionalModel& model, double x, std::optional<double> w = std::nullopt,
                  const EvalConfig& cfg = {});

/// d^2 log f(y|x,w) / dx dy, or the same for f(y|x). Continuous Y only.
/// Throws NonPositiveDensity when a stencil node leaves the support even
/// after the steps have been shrunk.
EstimatedReal mdi(const ConditionalModel& model, double y, double x,
                  std::optional<double> w = std::nullopt, const EvalConfig& cfg = {});

/// d log E(Y|x,w) / dx, or the marginal version. Throws NonPositiveMean
/// when a mean on the stencil is not positive, or below 1e-8 when it comes
/// from quadrature.
EstimatedReal led(const ConditionalModel& model, double x, std::optional<double> w = std::nullopt,
                  const EvalConfig& cfg = {});

/// dF(y|x,w)/dx at fixed y, or the marginal version.
EstimatedReal ddf(const ConditionalModel& model, double y, double x,
                  std::optional<double> w = std::nullopt, const EvalConfig& cfg = {});

/// d/dx of log(P(Y=1|.)/P(Y=0|.)) for binary Y. Throws DegenerateProbability
/// when either class probability is within 1e-12 of zero.
EstimatedReal mdi_binary(const ConditionalModel& model, double x,
                         std::optional<double> w = std::nullopt, const EvalConfig& cfg = {});

/// Dispatches on the measure kind; throws InvalidParams when an MDI or DDF
/// point lacks y.
EstimatedReal evaluate_measure(MeasureKind kind, const ConditionalModel& model,
                               const MeasurePoint& point, const EvalConfig& cfg = {});

struct CorrelationEstimate {
  double value = 0.0;
  /// Delta-method standard error, valid without normality.
  double std_error = 0.0;
  double lower = 0.0;  // value - 3 se
  double upper = 0.0;  // value + 3 se
  long samples = 0;

  bool band_contains(double r) const { return lower <= r && r <= upper; }
};

/// Monte Carlo Pearson correlation of (X, Y) with X ~ x_law, W ~ f(w|X) and
/// Y ~ f(y|X,W). Needs samplers for W and Y. Each call owns its generator.
CorrelationEstimate correlation_mc(const ConditionalModel& model, const Family& x_law, long n,
                                   Seed seed);

}  // namespace collapse
