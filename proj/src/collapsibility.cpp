#include "collapse/collapsibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "collapse/errors.hpp"
#include "detail.hpp"

namespace collapse {
namespace {

using detail::require;

constexpr double kExactProbeTol = 1e-6;
// probes that go through conditioning or differentiate mixed quantities
constexpr double kNumericProbeTol = 1e-4;
constexpr double kNegligibleDensity = 1e-12;

void require_increasing(const std::vector<double>& v, const char* what) {
  for (double t : v) require(std::isfinite(t), ErrorKind::InvalidParams, std::string(what) + " must be finite");
  for (std::size_t i = 1; i < v.size(); ++i) {
    require(v[i - 1] < v[i], ErrorKind::InvalidParams, std::string(what) + " must be strictly increasing");
  }
}

struct YSlot {
  double x;
  std::optional<double> y;
};

std::vector<YSlot> xy_slots(MeasureKind measure, const GridSpec& grid) {
  std::vector<YSlot> slots;
  for (double x : grid.x_points) {
    if (needs_y(measure)) {
      for (double y : grid.y_points) slots.push_back({x, y});
    } else {
      slots.push_back({x, std::nullopt});
    }
  }
  return slots;
}

void check_inputs(MeasureKind measure, const GridSpec& grid) {
  grid.validate();
  require(!needs_y(measure) || !grid.y_points.empty(), ErrorKind::InvalidParams,
          std::string(to_string(measure)) + " needs y points");
}

void settle(PointRecord& r, const GridSpec& grid) {
  r.gap = std::abs(r.conditional.value - r.marginal.value);
  r.tolerance = grid.tolerance(r.marginal.value);
  r.within = r.gap <= r.tolerance;
}

template <class Fn>
void guarded(PointRecord& r, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (!is_numerical(e.kind())) throw;
    r.failure = e.what();
  }
}

// E_{W|x} of the conditional measure. For MDI only the W-mass where y is
// inside the conditional support counts; the rest is reported as excluded.
EstimatedReal conditional_average(MeasureKind measure, const ConditionalModel& model, double x,
                                  std::optional<double> y, const EvalConfig& cfg,
                                  double& excluded) {
  double inner_err = 0.0;
  auto at_w = [&](double w) {
    try {
      const auto v = evaluate_measure(measure, model, {x, y, w}, cfg);
      inner_err = std::max(inner_err, v.err_estimate);
      return v.value;
    } catch (const Error& e) {
      if (!is_numerical(e.kind()) || model.covariate.is_degenerate() ||
          !detail::negligible_weight(model.covariate.density(w, x), w, model.covariate.support(x))) {
        throw;
      }
      return 0.0;
    }
  };
  excluded = 0.0;
  if (measure == MeasureKind::MDI) {
    std::vector<double> breaks;
    if (model.y_support.w_breakpoints) breaks = model.y_support.w_breakpoints(*y, x);
    auto inside = [&](double w) { return model.y_in_support(*y, x, w); };
    const auto mass =
        expect_over_w(model.covariate, x, [&](double w) { return inside(w) ? 1.0 : 0.0; }, cfg, breaks);
    if (!(mass.value > kNegligibleDensity)) {
      throw Error(ErrorKind::DegenerateConditional,
                  model.name + ": y=" + std::to_string(*y) + " is outside the support for every w");
    }
    const auto total =
        expect_over_w(model.covariate, x, [&](double w) { return inside(w) ? at_w(w) : 0.0; }, cfg, breaks);
    excluded = std::max(0.0, 1.0 - mass.value);
    const double value = total.value / mass.value;
    return {value,
            (total.err_estimate + std::abs(value) * mass.err_estimate) / mass.value + inner_err,
            total.evaluations + mass.evaluations};
  }
  auto r = expect_over_w(model.covariate, x, at_w, cfg);
  r.err_estimate += inner_err;
  return r;
}

std::vector<PointRecord> average_records(MeasureKind measure, const ConditionalModel& model,
                                         const GridSpec& grid, const EvalConfig& cfg, int threads) {
  const auto slots = xy_slots(measure, grid);
  std::vector<PointRecord> records(slots.size());
  detail::parallel_for(slots.size(), threads, [&](std::size_t i) {
    PointRecord& r = records[i];
    r.x = slots[i].x;
    r.y = slots[i].y;
    guarded(r, [&] {
      r.marginal = evaluate_measure(measure, model, {r.x, r.y, std::nullopt}, cfg);
      r.conditional = conditional_average(measure, model, r.x, r.y, cfg, r.excluded_mass);
      settle(r, grid);
    });
    if (measure == MeasureKind::EDF && !r.failure) {
      try {
        r.residual = edf_residual(model, r.x, cfg).value;
      } catch (const Error& e) {
        if (!is_numerical(e.kind())) throw;
      }
    }
  });
  return records;
}

// One record per (x, y, w) whose y is inside the support at (x, w); the
// marginal is taken from the matching average record.
std::vector<PointRecord> stratum_records(MeasureKind measure, const ConditionalModel& model,
                                         const GridSpec& grid, const EvalConfig& cfg, int threads,
                                         const std::vector<PointRecord>& marginals) {
  struct Slot {
    std::size_t parent;
    double w;
  };
  std::vector<Slot> slots;
  for (std::size_t p = 0; p < marginals.size(); ++p) {
    for (double w : grid.w_points) {
      const auto& m = marginals[p];
      if (measure == MeasureKind::MDI && !model.y_in_support(*m.y, m.x, w)) continue;
      slots.push_back({p, w});
    }
  }
  std::vector<PointRecord> records(slots.size());
  detail::parallel_for(slots.size(), threads, [&](std::size_t i) {
    const PointRecord& parent = marginals[slots[i].parent];
    PointRecord& r = records[i];
    r.x = parent.x;
    r.y = parent.y;
    r.w = slots[i].w;
    if (parent.failure) {
      r.failure = parent.failure;
      return;
    }
    guarded(r, [&] {
      r.marginal = parent.marginal;
      r.conditional = evaluate_measure(measure, model, {r.x, r.y, r.w}, cfg);
      settle(r, grid);
    });
  });
  return records;
}

Classification classify(const std::vector<PointRecord>& records, Classification success) {
  bool failed = false;
  for (const auto& r : records) {
    if (r.failure) {
      failed = true;
    } else if (!r.within) {
      return Classification::NotCollapsible;
    }
  }
  return failed ? Classification::Indeterminate : success;
}

double max_gap(const std::vector<PointRecord>& records) {
  double g = 0.0;
  for (const auto& r : records) {
    if (!r.failure) g = std::max(g, r.gap);
  }
  return g;
}

int strict_sign(double v, double tol) { return v > tol ? 1 : (v < -tol ? -1 : 0); }

ReversalReport reversal_from(const std::vector<PointRecord>& strata,
                             const std::vector<PointRecord>& marginals, double tol) {
  ReversalReport report;
  int sign = 0;
  for (const auto& r : strata) {
    const int s = r.failure ? 0 : strict_sign(r.conditional.value, tol);
    if (s == 0 || (sign != 0 && s != sign)) {
      sign = 0;
      break;
    }
    sign = s;
  }
  report.conditional_sign = strata.empty() ? 0 : sign;
  if (report.conditional_sign == 0) return report;
  for (const auto& m : marginals) {
    if (!m.failure && strict_sign(m.marginal.value, tol) == -report.conditional_sign) {
      report.evidence.push_back(m);
    }
  }
  report.reversal = !report.evidence.empty();
  return report;
}

CollapsibilityVerdict run_check(MeasureKind measure, const ConditionalModel& model,
                                const GridSpec& grid, const EvalConfig& cfg,
                                const CheckOptions& options, bool simple) {
  check_inputs(measure, grid);
  require(!simple || !grid.w_points.empty(), ErrorKind::InvalidParams,
          "simple collapsibility needs w points");
  CollapsibilityVerdict v;
  v.measure = measure;
  v.check = simple ? "simple" : "average";

  const auto averages = average_records(measure, model, grid, cfg, options.threads);
  std::vector<PointRecord> strata;
  if (!grid.w_points.empty() && (simple || options.reversal)) {
    strata = stratum_records(measure, model, grid, cfg, options.threads, averages);
  }

  const Classification average_class = classify(averages, Classification::AverageCollapsible);
  if (simple) {
    const Classification strata_class = classify(strata, Classification::SimpleCollapsible);
    if (average_class == Classification::AverageCollapsible &&
        strata_class == Classification::SimpleCollapsible) {
      v.classification = Classification::SimpleCollapsible;
    } else {
      v.classification = average_class;
    }
    v.points = strata;
    v.points.insert(v.points.end(), averages.begin(), averages.end());
  } else {
    v.classification = average_class;
    v.points = averages;
  }
  v.max_gap = max_gap(v.points);
  if (options.reversal && !grid.w_points.empty()) v.reversal = reversal_from(strata, averages, grid.tol_abs);
  if (options.probes) v.probes = probe_conditions(model, grid, cfg);
  return v;
}

ConditionProbe make_probe(std::string name, std::string description, double tol,
                          std::vector<MeasureKind> implies) {
  ConditionProbe p;
  p.name = std::move(name);
  p.description = std::move(description);
  p.tolerance = tol;
  p.implies = std::move(implies);
  return p;
}

void unavailable(ConditionProbe& p, std::string why) {
  p.status = ProbeStatus::Unavailable;
  p.deviation = std::numeric_limits<double>::quiet_NaN();
  p.note = std::move(why);
}

// Runs body, which returns the deviation; numerical failures make the
// probe Unavailable rather than a pass or a fail.
template <class Fn>
void run_probe(ConditionProbe& p, Fn&& body) {
  try {
    p.deviation = body();
    p.status = p.deviation <= p.tolerance ? ProbeStatus::Pass : ProbeStatus::Fail;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::MissingCapability && !is_numerical(e.kind())) throw;
    unavailable(p, e.what());
  }
}

}  // namespace

void GridSpec::validate() const {
  require(!x_points.empty(), ErrorKind::InvalidParams, "grid needs at least one x point");
  require_increasing(x_points, "x points");
  require_increasing(y_points, "y points");
  require_increasing(w_points, "w points");
  require(tol_abs > 0.0 && tol_rel > 0.0, ErrorKind::InvalidParams, "grid tolerances must be positive");
}

double GridSpec::tolerance(double reference) const {
  return std::max(tol_abs, tol_rel * std::abs(reference));
}

std::string_view to_string(Classification c) {
  switch (c) {
    case Classification::SimpleCollapsible: return "simple-collapsible";
    case Classification::AverageCollapsible: return "average-collapsible";
    case Classification::NotCollapsible: return "not-collapsible";
    case Classification::Indeterminate: return "indeterminate";
  }
  return "unknown";
}

std::string_view to_string(ProbeStatus s) {
  switch (s) {
    case ProbeStatus::Pass: return "pass";
    case ProbeStatus::Fail: return "fail";
    case ProbeStatus::Unavailable: return "unavailable";
  }
  return "unknown";
}

CollapsibilityVerdict check_average(MeasureKind measure, const ConditionalModel& model,
                                    const GridSpec& grid, const EvalConfig& cfg,
                                    const CheckOptions& options) {
  return run_check(measure, model, grid, cfg, options, false);
}

CollapsibilityVerdict check_simple(MeasureKind measure, const ConditionalModel& model,
                                   const GridSpec& grid, const EvalConfig& cfg,
                                   const CheckOptions& options) {
  return run_check(measure, model, grid, cfg, options, true);
}

EstimatedReal edf_residual(const ConditionalModel& model, double x, const EvalConfig& cfg) {
  require(model.has_mean() || model.has_density(), ErrorKind::MissingCapability,
          model.name + ": the EDF residual needs a conditional mean or density");
  const CovariateLaw& law = model.covariate;
  auto mean_at = [&](double s, double w) { return conditional_mean(model, s, w, cfg).value; };
  auto step_spec = [&](double at, Interval room, double scale) {
    return detail::spec_for_step(cfg.diff, at, detail::local_step(at, room, cfg.diff.base_step) * scale);
  };

  if (law.is_degenerate()) {
    const double c = law.point_mass(x);
    const auto dc = detail::with_shrinking_steps([&](double scale) {
      return differentiate(law.point_mass, x, step_spec(x, model.x_domain, scale), model.x_domain);
    });
    const auto dm = detail::with_shrinking_steps([&](double scale) {
      return differentiate([&](double w) { return mean_at(x, w); }, c,
                           step_spec(c, Interval::real_line(), scale));
    });
    return {dm.value * dc.value,
            std::abs(dm.value) * dc.err_estimate + std::abs(dc.value) * dm.err_estimate,
            dc.evaluations + dm.evaluations};
  }

  // E[m(x,W) s(W)] with the score s(w) = d/dx log f(w|x)
  double inner_err = 0.0;
  auto integrand = [&](double w) {
    const auto score = detail::with_shrinking_steps([&](double scale) {
      return differentiate(
          [&](double s) {
            const double f = law.density(w, s);
            if (!(f > 0.0)) throw Error(ErrorKind::NonPositiveDensity, "f(w|x) vanishes on the stencil");
            return std::log(f);
          },
          x, step_spec(x, model.x_domain, scale), model.x_domain);
    });
    const double m = mean_at(x, w);
    inner_err = std::max(inner_err, std::abs(m) * score.err_estimate);
    return m * score.value;
  };
  auto r = expect_over_w(law, x, integrand, cfg);
  r.err_estimate += inner_err;
  return r;
}

std::vector<ConditionProbe> probe_conditions(const ConditionalModel& model, const GridSpec& grid,
                                             const EvalConfig& cfg) {
  grid.validate();
  const auto& xs = grid.x_points;
  const auto& ys = grid.y_points;
  const auto& ws = grid.w_points;
  const bool continuous = model.y_kind == YKind::Continuous;
  std::vector<ConditionProbe> probes;

  {
    auto p = make_probe("mean_free_of_w", "E(Y|x,w) does not vary with w", kExactProbeTol,
                        {MeasureKind::EDF, MeasureKind::LED});
    if (ws.size() < 2) {
      unavailable(p, "needs at least two w points");
    } else {
      run_probe(p, [&] {
        return homogeneity_probe(model, xs, ys, ws, HomogeneityQuantity::Mean, cfg, p.tolerance)
            .max_deviation;
      });
    }
    probes.push_back(std::move(p));
  }

  {
    auto p = make_probe("x_independent_of_w", "f(w|x) does not vary with x", kExactProbeTol,
                        {MeasureKind::EDF});
    const CovariateLaw& law = model.covariate;
    if (xs.size() < 2) {
      unavailable(p, "needs at least two x points");
    } else if (law.is_degenerate()) {
      run_probe(p, [&] {
        double dev = 0.0;
        for (double x : xs) dev = std::max(dev, std::abs(law.point_mass(x) - law.point_mass(xs.front())));
        return dev;
      });
    } else if (ws.empty()) {
      unavailable(p, "needs w points");
    } else {
      run_probe(p, [&] {
        double dev = 0.0;
        for (double w : ws) {
          const double ref = law.density(w, xs.front());
          for (double x : xs) dev = std::max(dev, std::abs(law.density(w, x) - ref));
        }
        return dev;
      });
    }
    probes.push_back(std::move(p));
  }

  {
    auto p = make_probe("y_independent_of_w_given_x", "f(y|x,w) does not vary with w", kExactProbeTol,
                        {MeasureKind::EDF, MeasureKind::MDI, MeasureKind::LED, MeasureKind::DDF,
                         MeasureKind::MDIBinary});
    if (ys.empty() || ws.size() < 2) {
      unavailable(p, "needs y points and at least two w points");
    } else if (model.has_density()) {
      run_probe(p, [&] {
        return homogeneity_probe(model, xs, ys, ws, HomogeneityQuantity::Density, cfg, p.tolerance)
            .max_deviation;
      });
    } else if (model.has_cdf()) {
      run_probe(p, [&] {
        double dev = 0.0;
        for (double x : xs) {
          for (double y : ys) {
            const double ref = model.cdf_yxw(y, x, ws.front());
            for (double w : ws) dev = std::max(dev, std::abs(model.cdf_yxw(y, x, w) - ref));
          }
        }
        return dev;
      });
    } else {
      unavailable(p, "needs a conditional density or cdf");
    }
    probes.push_back(std::move(p));
  }

  {
    auto p = make_probe("x_independent_of_w_given_y",
                        "f(w|x,y) = f(y|x,w) f(w|x) / f(y|x) does not vary with x", kNumericProbeTol,
                        {MeasureKind::MDI});
    if (ys.empty() || ws.empty() || xs.size() < 2) {
      unavailable(p, "needs y and w points and at least two x points");
    } else if (!model.has_density() || model.covariate.is_degenerate()) {
      unavailable(p, "needs a conditional density and a covariate density");
    } else {
      run_probe(p, [&] {
        double dev = 0.0;
        for (double y : ys) {
          std::vector<double> fy;
          for (double x : xs) fy.push_back(marginal_density(model, y, x, cfg).value);
          for (double w : ws) {
            std::optional<double> ref;
            for (std::size_t i = 0; i < xs.size(); ++i) {
              if (fy[i] < kNegligibleDensity) continue;
              const double x = xs[i];
              const double f = model.y_in_support(y, x, w) ? model.density_yxw(y, x, w) : 0.0;
              const double posterior = f * model.covariate.density(w, x) / fy[i];
              if (!ref) {
                ref = posterior;
              } else {
                dev = std::max(dev, std::abs(posterior - *ref));
              }
            }
          }
        }
        return dev;
      });
    }
    probes.push_back(std::move(p));
  }

  auto slope_probe = [&](std::string name, std::string description, bool in_y) {
    auto p = make_probe(std::move(name), std::move(description), kNumericProbeTol, {MeasureKind::MDI});
    if (!continuous) {
      unavailable(p, "needs continuous Y");
    } else if (ys.empty() || ws.empty()) {
      unavailable(p, "needs y and w points");
    } else if (!model.has_density()) {
      unavailable(p, "needs a conditional density");
    } else {
      run_probe(p, [&] {
        double dev = 0.0;
        for (double x : xs) {
          for (double y : ys) {
            if (!(marginal_density(model, y, x, cfg).value > kNegligibleDensity)) continue;
            const double marginal = in_y ? log_density_slope_y(model, y, x, std::nullopt, cfg).value
                                         : log_density_slope_x(model, y, x, std::nullopt, cfg).value;
            for (double w : ws) {
              if (!model.y_in_support(y, x, w)) continue;
              const double cond = in_y ? log_density_slope_y(model, y, x, w, cfg).value
                                       : log_density_slope_x(model, y, x, w, cfg).value;
              dev = std::max(dev, std::abs(cond - marginal) / std::max(1.0, std::abs(marginal)));
            }
          }
        }
        return dev;
      });
    }
    return p;
  };
  probes.push_back(slope_probe("y_log_slope_matches_marginal",
                               "d/dy log f(y|x,w) equals d/dy log f(y|x) (relative)", true));
  probes.push_back(slope_probe("x_log_slope_matches_marginal",
                               "d/dx log f(y|x,w) equals d/dx log f(y|x) (relative)", false));
  return probes;
}

ReversalReport detect_reversal(MeasureKind measure, const ConditionalModel& model,
                               const GridSpec& grid, const EvalConfig& cfg) {
  check_inputs(measure, grid);
  require(!grid.w_points.empty(), ErrorKind::InvalidParams, "reversal detection needs w points");
  std::vector<PointRecord> marginals;
  for (const auto& slot : xy_slots(measure, grid)) {
    PointRecord r;
    r.x = slot.x;
    r.y = slot.y;
    guarded(r, [&] { r.marginal = evaluate_measure(measure, model, {r.x, r.y, std::nullopt}, cfg); });
    marginals.push_back(r);
  }
  const auto strata = stratum_records(measure, model, grid, cfg, 0, marginals);
  return reversal_from(strata, marginals, grid.tol_abs);
}

}  // namespace collapse
