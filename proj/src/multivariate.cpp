#include "collapse/multivariate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "collapse/errors.hpp"
#include "detail.hpp"

namespace collapse {
namespace {

using detail::require;

constexpr double kFactorizationTol = 1e-4;
constexpr double kNormalizationTol = 1e-6;
constexpr double kExactProbeTol = 1e-6;

bool in_support(const BivariateCovariateModel& m, double y, double x, double w1, double w2) {
  if (!m.y_bounds) return true;
  return m.y_bounds(x, w1, w2).contains(y);
}

double density_or_zero(const BivariateCovariateModel& m, double y, double x, double w1, double w2) {
  return in_support(m, y, x, w1, w2) ? m.density_yxw(y, x, w1, w2) : 0.0;
}

double covariate_density(const CovariateLaw& law, double w, double x) {
  if (law.is_degenerate()) return law.point_mass(x) == w ? 1.0 : 0.0;
  return law.density(w, x);
}

void require_increasing(const std::vector<double>& v, const char* what) {
  for (double t : v) require(std::isfinite(t), ErrorKind::InvalidParams, std::string(what) + " must be finite");
  for (std::size_t i = 1; i < v.size(); ++i) {
    require(v[i - 1] < v[i], ErrorKind::InvalidParams, std::string(what) + " must be strictly increasing");
  }
}

// Integrates one covariate out of the mean and density; the other becomes
// the covariate of the result.
ConditionalModel collapse_one(const BivariateCovariateModel& model, bool keep_w2, const EvalConfig& cfg) {
  auto m = std::make_shared<const BivariateCovariateModel>(model);
  ConditionalModel out;
  out.name = model.name + (keep_w2 ? "|w2" : "|w1");
  out.y_kind = model.y_kind;
  out.x_domain = model.x_domain;
  out.covariate = keep_w2 ? model.w2 : model.w1;
  const CovariateLaw& other = keep_w2 ? m->w1 : m->w2;
  auto pair = [keep_w2](double kept, double mixed) {
    return keep_w2 ? std::pair{mixed, kept} : std::pair{kept, mixed};
  };
  if (model.has_mean()) {
    out.mean_yxw = [m, &other, pair, cfg](double x, double w) {
      return expect_over_w(other, x, [&](double v) {
               const auto [w1, w2] = pair(w, v);
               return m->mean_yxw(x, w1, w2);
             }, cfg).value;
    };
  }
  if (model.has_density()) {
    out.density_yxw = [m, &other, pair, cfg](double y, double x, double w) {
      return expect_over_w(other, x, [&](double v) {
               const auto [w1, w2] = pair(w, v);
               return density_or_zero(*m, y, x, w1, w2);
             }, cfg).value;
    };
  }
  return out;
}

void validate_measure(MeasureKind measure) {
  require(measure == MeasureKind::EDF || measure == MeasureKind::MDI, ErrorKind::InvalidParams,
          "split-covariate checks support edf and mdi only");
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

// Copies a univariate probe under a new name and description.
ConditionProbe renamed(const std::vector<ConditionProbe>& probes, const std::string& from, std::string name,
                       std::string description, std::vector<MeasureKind> implies) {
  for (const auto& p : probes) {
    if (p.name != from) continue;
    ConditionProbe q = p;
    q.name = std::move(name);
    q.description = std::move(description);
    q.implies = std::move(implies);
    return q;
  }
  throw Error(ErrorKind::InvalidParams, "no probe named " + from);
}

}  // namespace

ConditionalModel BivariateCovariateModel::slice_at_w1(double w1_value) const {
  auto m = std::make_shared<const BivariateCovariateModel>(*this);
  ConditionalModel out;
  out.name = name + "@w1";
  out.y_kind = y_kind;
  out.x_domain = x_domain;
  out.covariate = w2;
  if (has_mean()) out.mean_yxw = [m, w1_value](double x, double w) { return m->mean_yxw(x, w1_value, w); };
  if (has_density()) {
    out.density_yxw = [m, w1_value](double y, double x, double w) { return m->density_yxw(y, x, w1_value, w); };
  }
  if (y_bounds) {
    out.y_support.bounds = [m, w1_value](double x, double w) { return m->y_bounds(x, w1_value, w); };
    out.y_support.parametric = true;
  }
  return out;
}

ConditionalModel BivariateCovariateModel::collapse_w1(const EvalConfig& cfg) const {
  return collapse_one(*this, true, cfg);
}

ConditionalModel BivariateCovariateModel::collapse_w2(const EvalConfig& cfg) const {
  return collapse_one(*this, false, cfg);
}

void SplitCovariateGrid::validate() const {
  require(!x_points.empty(), ErrorKind::InvalidParams, "grid needs at least one x point");
  require_increasing(x_points, "x points");
  require_increasing(y_points, "y points");
  require_increasing(w1_points, "w1 points");
  require_increasing(w2_points, "w2 points");
  require(tol_abs > 0.0 && tol_rel > 0.0, ErrorKind::InvalidParams, "grid tolerances must be positive");
}

double SplitCovariateGrid::tolerance(double reference) const {
  return std::max(tol_abs, tol_rel * std::abs(reference));
}

void validate_bivariate(const BivariateCovariateModel& model, const SplitCovariateGrid& grid,
                        const EvalConfig& cfg) {
  grid.validate();
  require(model.has_mean() || model.has_density(), ErrorKind::MissingCapability,
          model.name + ": needs a conditional mean or density");
  require(model.declares_factorization, ErrorKind::FactorizationViolated,
          model.name + ": W1 and W2 are not declared independent given X");
  for (double x : grid.x_points) {
    for (const CovariateLaw* law : {&model.w1, &model.w2}) {
      if (law->is_degenerate()) continue;
      const double mass = expect_over_w(*law, x, [](double) { return 1.0; }, cfg).value;
      require(std::abs(mass - 1.0) <= kNormalizationTol, ErrorKind::InvalidParams,
              model.name + ": a covariate law integrates to " + std::to_string(mass) + " at x=" +
                  std::to_string(x));
    }
    if (!model.joint_covariate) continue;
    for (double a : grid.w1_points) {
      for (double b : grid.w2_points) {
        const double product = covariate_density(model.w1, a, x) * covariate_density(model.w2, b, x);
        const double gap = std::abs(model.joint_covariate(a, b, x) - product);
        if (gap > kFactorizationTol) {
          throw Error(ErrorKind::FactorizationViolated,
                      model.name + ": f(w1,w2|x) differs from the product by " + std::to_string(gap) +
                          " at x=" + std::to_string(x));
        }
      }
    }
  }
}

EstimatedReal conditional_average_bivariate(MeasureKind measure, const BivariateCovariateModel& model,
                                            double x, std::optional<double> y, const EvalConfig& cfg,
                                            IntegrationOrder order, double* excluded) {
  validate_measure(measure);
  require(!needs_y(measure) || y.has_value(), ErrorKind::InvalidParams, "mdi needs a y value");
  double inner_err = 0.0;
  long evaluations = 0;
  auto measure_at = [&](double w1, double w2) {
    try {
      const auto v = evaluate_measure(measure, model.slice_at_w1(w1), {x, y, w2}, cfg);
      inner_err = std::max(inner_err, v.err_estimate);
      evaluations += v.evaluations;
      return v.value;
    } catch (const Error& e) {
      auto negligible = [x](const CovariateLaw& law, double w) {
        return !law.is_degenerate() && detail::negligible_weight(law.density(w, x), w, law.support(x));
      };
      const double weight = (model.w1.is_degenerate() ? 1.0 : model.w1.density(w1, x)) *
                            (model.w2.is_degenerate() ? 1.0 : model.w2.density(w2, x));
      if (!is_numerical(e.kind())) throw;
      if (!(weight < detail::kNegligibleWeight) && !negligible(model.w1, w1) && !negligible(model.w2, w2)) throw;
      return 0.0;
    }
  };
  const bool restrict = measure == MeasureKind::MDI;
  auto iterated = [&](const std::function<double(double, double)>& g) {
    const CovariateLaw& outer = order == IntegrationOrder::W1Inner ? model.w2 : model.w1;
    const CovariateLaw& inner = order == IntegrationOrder::W1Inner ? model.w1 : model.w2;
    return expect_over_w(outer, x, [&](double u) {
      return expect_over_w(inner, x, [&](double v) {
               return order == IntegrationOrder::W1Inner ? g(v, u) : g(u, v);
             }, cfg).value;
    }, cfg);
  };
  if (!restrict) {
    auto r = iterated(measure_at);
    r.err_estimate += inner_err;
    r.evaluations += evaluations;
    if (excluded) *excluded = 0.0;
    return r;
  }
  const auto mass = iterated([&](double w1, double w2) { return in_support(model, *y, x, w1, w2) ? 1.0 : 0.0; });
  if (!(mass.value > 1e-12)) {
    throw Error(ErrorKind::DegenerateConditional, model.name + ": y is outside the support for every w");
  }
  const auto total = iterated([&](double w1, double w2) {
    return in_support(model, *y, x, w1, w2) ? measure_at(w1, w2) : 0.0;
  });
  if (excluded) *excluded = std::max(0.0, 1.0 - mass.value);
  const double value = total.value / mass.value;
  return {value, (total.err_estimate + std::abs(value) * mass.err_estimate) / mass.value + inner_err,
          total.evaluations + mass.evaluations + evaluations};
}

CollapsibilityVerdict check_average_bivariate(MeasureKind measure, const BivariateCovariateModel& model,
                                              const SplitCovariateGrid& grid, const EvalConfig& cfg,
                                              const CheckOptions& options) {
  validate_measure(measure);
  validate_bivariate(model, grid, cfg);
  require(!needs_y(measure) || !grid.y_points.empty(), ErrorKind::InvalidParams, "mdi needs y points");

  const ConditionalModel marginal_model = model.collapse_w1(cfg);
  struct Slot {
    double x;
    std::optional<double> y;
  };
  std::vector<Slot> slots;
  for (double x : grid.x_points) {
    if (needs_y(measure)) {
      for (double y : grid.y_points) slots.push_back({x, y});
    } else {
      slots.push_back({x, std::nullopt});
    }
  }

  CollapsibilityVerdict v;
  v.measure = measure;
  v.check = "average-split";
  v.points.resize(slots.size());
  detail::parallel_for(slots.size(), options.threads, [&](std::size_t i) {
    PointRecord& r = v.points[i];
    r.x = slots[i].x;
    r.y = slots[i].y;
    try {
      r.marginal = evaluate_measure(measure, marginal_model, {r.x, r.y, std::nullopt}, cfg);
      r.conditional = conditional_average_bivariate(measure, model, r.x, r.y, cfg,
                                                    IntegrationOrder::W1Inner, &r.excluded_mass);
      r.gap = std::abs(r.conditional.value - r.marginal.value);
      r.tolerance = grid.tolerance(r.marginal.value);
      r.within = r.gap <= r.tolerance;
    } catch (const Error& e) {
      if (!is_numerical(e.kind())) throw;
      r.failure = e.what();
    }
  });

  bool failed = false;
  bool outside = false;
  for (const auto& r : v.points) {
    if (r.failure) {
      failed = true;
    } else {
      outside = outside || !r.within;
      v.max_gap = std::max(v.max_gap, r.gap);
    }
  }
  v.classification = outside  ? Classification::NotCollapsible
                     : failed ? Classification::Indeterminate
                              : Classification::AverageCollapsible;
  if (options.probes) v.probes = probe_conditions_bivariate(model, grid, cfg);
  return v;
}

std::vector<ConditionProbe> probe_conditions_bivariate(const BivariateCovariateModel& model,
                                                       const SplitCovariateGrid& grid,
                                                       const EvalConfig& cfg) {
  grid.validate();
  std::vector<ConditionProbe> probes;

  {
    auto p = make_probe("w1_independent_of_w2_given_x", "f(w1,w2|x) = f(w1|x) f(w2|x)", kFactorizationTol,
                        {MeasureKind::EDF, MeasureKind::MDI});
    if (!model.declares_factorization) {
      p.status = ProbeStatus::Fail;
      p.deviation = std::numeric_limits<double>::infinity();
      p.note = "not declared by the model";
    } else if (!model.joint_covariate) {
      p.status = ProbeStatus::Pass;
      p.note = "declared; no joint covariate density to compare";
    } else {
      for (double x : grid.x_points) {
        for (double a : grid.w1_points) {
          for (double b : grid.w2_points) {
            const double product = covariate_density(model.w1, a, x) * covariate_density(model.w2, b, x);
            p.deviation = std::max(p.deviation, std::abs(model.joint_covariate(a, b, x) - product));
          }
        }
      }
      p.status = p.deviation <= p.tolerance ? ProbeStatus::Pass : ProbeStatus::Fail;
    }
    probes.push_back(std::move(p));
  }

  {
    const bool by_density = model.has_density();
    auto p = make_probe("y_independent_of_w1_given_x_w2",
                        by_density ? "f(y|x,w1,w2) constant in w1" : "E(Y|x,w1,w2) constant in w1",
                        kExactProbeTol, {MeasureKind::EDF});
    if (grid.w1_points.size() < 2 || grid.w2_points.empty() || (by_density && grid.y_points.empty())) {
      p.status = ProbeStatus::Unavailable;
      p.deviation = std::numeric_limits<double>::quiet_NaN();
      p.note = "needs two w1 points, w2 points and (for densities) y points";
    } else {
      const std::vector<double> no_y{0.0};
      const auto& ys = by_density ? grid.y_points : no_y;
      for (double x : grid.x_points) {
        for (double y : ys) {
          for (double b : grid.w2_points) {
            const double a0 = grid.w1_points.front();
            const double ref = by_density ? density_or_zero(model, y, x, a0, b) : model.mean_yxw(x, a0, b);
            for (double a : grid.w1_points) {
              const double q = by_density ? density_or_zero(model, y, x, a, b) : model.mean_yxw(x, a, b);
              p.deviation = std::max(p.deviation, std::abs(q - ref));
            }
          }
        }
      }
      p.status = p.deviation <= p.tolerance ? ProbeStatus::Pass : ProbeStatus::Fail;
    }
    probes.push_back(std::move(p));
  }

  // the remaining conditions are univariate ones on a collapsed model
  const auto keep_w2 = probe_conditions(model.collapse_w1(cfg),
                                        GridSpec{grid.x_points, grid.y_points, grid.w2_points, grid.tol_abs,
                                                 grid.tol_rel},
                                        cfg);
  const auto keep_w1 = probe_conditions(model.collapse_w2(cfg),
                                        GridSpec{grid.x_points, grid.y_points, grid.w1_points, grid.tol_abs,
                                                 grid.tol_rel},
                                        cfg);
  probes.push_back(renamed(keep_w2, "x_independent_of_w", "x_independent_of_w2", "f(w2|x) constant in x",
                           {MeasureKind::EDF}));
  probes.push_back(renamed(keep_w1, "y_independent_of_w_given_x", "y_independent_of_w1_given_x",
                           "f(y|x,w1) constant in w1", {MeasureKind::MDI}));
  probes.push_back(renamed(keep_w2, "x_independent_of_w_given_y", "x_independent_of_w2_given_y",
                           "f(w2|x,y) constant in x", {MeasureKind::MDI}));
  probes.push_back(renamed(keep_w1, "x_independent_of_w_given_y", "x_independent_of_w1_given_y",
                           "f(w1|x,y) constant in x (x and y interchanged)", {MeasureKind::MDI}));
  probes.push_back(renamed(keep_w2, "y_independent_of_w_given_x", "y_independent_of_w2_given_x",
                           "f(y|x,w2) constant in w2 (x and y interchanged)", {MeasureKind::MDI}));
  return probes;
}

}  // namespace collapse
