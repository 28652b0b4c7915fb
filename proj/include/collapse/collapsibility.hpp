#pragma once

// Simple and average collapsibility of a measure over W on a finite grid,
// the EDF residual diagnostic, sufficient-condition probes and effect
// reversal detection.

#include <optional>
#include <string>
#include <vector>

#include "collapse/measures.hpp"
#include "collapse/model.hpp"

namespace collapse {

struct GridSpec {
  std::vector<double> x_points;
  /// Needed for MDI and DDF and for the density-based probes.
  std::vector<double> y_points;
  /// Strata for simple-collapsibility sweeps, reversal and probes.
  std::vector<double> w_points;
  double tol_abs = 1e-5;
  double tol_rel = 1e-4;

  /// Throws InvalidParams unless every list is strictly increasing, x is
  /// nonempty and the tolerances are positive.
  void validate() const;
  double tolerance(double reference) const;
};

enum class Classification { SimpleCollapsible, AverageCollapsible, NotCollapsible, Indeterminate };

std::string_view to_string(Classification c);

struct PointRecord {
  double x = 0.0;
  std::optional<double> y;
  /// Set for simple (per-stratum) comparisons, absent for average ones.
  std::optional<double> w;
  /// E_{W|x} of the conditional measure, or the conditional measure at w.
  EstimatedReal conditional;
  EstimatedReal marginal;
  double gap = 0.0;
  double tolerance = 0.0;
  bool within = false;
  /// Mass of W|x at which y lies outside the conditional support (MDI);
  /// the conditional average is taken over the remaining mass.
  double excluded_mass = 0.0;
  /// edf_residual at x, filled for EDF average records when it can be computed.
  std::optional<double> residual;
  /// Numerical failure at this point; the other fields are then unset.
  std::optional<std::string> failure;
};

enum class ProbeStatus { Pass, Fail, Unavailable };

std::string_view to_string(ProbeStatus s);

struct ConditionProbe {
  std::string name;
  std::string description;
  ProbeStatus status = ProbeStatus::Unavailable;
  double deviation = 0.0;
  double tolerance = 0.0;
  /// Measures whose average collapsibility follows when the probe passes.
  std::vector<MeasureKind> implies;
  std::string note;
};

struct ReversalReport {
  bool reversal = false;
  /// +1 or -1 when every conditional value has that strict sign, else 0.
  int conditional_sign = 0;
  /// Grid points whose marginal value has the opposite strict sign.
  std::vector<PointRecord> evidence;
};

struct CollapsibilityVerdict {
  MeasureKind measure = MeasureKind::EDF;
  /// "average" or "simple".
  std::string check;
  Classification classification = Classification::Indeterminate;
  std::vector<PointRecord> points;
  double max_gap = 0.0;
  std::optional<ReversalReport> reversal;
  std::vector<ConditionProbe> probes;
};

struct CheckOptions {
  /// Run detect_reversal when the grid has w points.
  bool reversal = true;
  /// Attach probe_conditions.
  bool probes = false;
  /// Worker threads for independent grid points; 0 picks the hardware count.
  int threads = 0;
};

/// E_{W|x}[conditional measure] against the marginal measure at every grid
/// point. AverageCollapsible iff every gap <= max(tol_abs, tol_rel*|marginal|);
/// a numerical failure at any point makes the verdict Indeterminate unless
/// another point already fails.
CollapsibilityVerdict check_average(MeasureKind measure, const ConditionalModel& model,
                                    const GridSpec& grid, const EvalConfig& cfg = {},
                                    const CheckOptions& options = {});

/// Conditional measure at every w in grid.w_points against the marginal,
/// plus the average comparison. SimpleCollapsible needs both to hold;
/// otherwise the average result decides between AverageCollapsible and
/// NotCollapsible.
CollapsibilityVerdict check_simple(MeasureKind measure, const ConditionalModel& model,
                                   const GridSpec& grid, const EvalConfig& cfg = {},
                                   const CheckOptions& options = {});

/// E_{W|x}[E(Y|x,W) d/dx log f(W|x)], the part of the marginal EDF that the
/// conditional average misses. For a degenerate W = c(x) it is
/// dE(Y|x,w)/dw * c'(x) at w = c(x).
EstimatedReal edf_residual(const ConditionalModel& model, double x, const EvalConfig& cfg = {});

/// Probes of the sufficient conditions on the grid:
///   mean_free_of_w                  E(Y|x,w) constant in w
///   x_independent_of_w              f(w|x) constant in x
///   y_independent_of_w_given_x      f(y|x,w) constant in w
///   x_independent_of_w_given_y      f(w|x,y) constant in x
///   y_log_slope_matches_marginal    d/dy log f(y|x,w) = d/dy log f(y|x)
///   x_log_slope_matches_marginal    d/dx log f(y|x,w) = d/dx log f(y|x)
/// Probes lacking a capability or grid axis are Unavailable.
std::vector<ConditionProbe> probe_conditions(const ConditionalModel& model, const GridSpec& grid,
                                             const EvalConfig& cfg = {});

ReversalReport detect_reversal(MeasureKind measure, const ConditionalModel& model,
                               const GridSpec& grid, const EvalConfig& cfg = {});

}  // namespace collapse
