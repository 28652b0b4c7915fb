#include "collapse/model.hpp"

#include <bit>
#include <cmath>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "collapse/errors.hpp"
#include "detail.hpp"

namespace collapse {
namespace {

using detail::require;

double finite_or_throw(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::NonFiniteEvaluation, std::string(what) + " is " + std::to_string(v));
  }
  return v;
}

double representative_w(const CovariateLaw& law, double x) {
  if (law.is_degenerate()) return law.point_mass(x);
  if (law.gaussian) return law.gaussian->mean(x);
  const Interval s = law.support(x);
  if (s.is_finite()) return 0.5 * (s.lower + s.upper);
  if (std::isfinite(s.lower)) return s.lower + 1.0;
  if (std::isfinite(s.upper)) return s.upper - 1.0;
  return 0.0;
}

bool is_count_value(double y) { return y >= 0.0 && std::isfinite(y) && y == std::floor(y); }

// Sums term(k) for k = 0, 1, ... until the pmf mass exceeds 1 - tail.
template <class Term>
double sum_over_counts(const std::function<double(double)>& pmf, const EvalConfig& cfg, Term term) {
  double mass = 0.0;
  double total = 0.0;
  for (int k = 0; k <= cfg.max_count; ++k) {
    const double p = finite_or_throw(pmf(k), "probability mass");
    mass += p;
    total += term(k, p);
    if (mass > 1.0 - cfg.count_tail) return total;
  }
  throw Error(ErrorKind::NonConvergence,
              "count distribution keeps more than the tail tolerance beyond " +
                  std::to_string(cfg.max_count));
}

}  // namespace

void EvalConfig::validate() const {
  quadrature.validate();
  diff.validate();
  require(count_tail > 0.0 && count_tail < 1.0, ErrorKind::InvalidParams,
          "count_tail must lie in (0,1)");
  require(max_count >= 1, ErrorKind::InvalidParams, "max_count must be >= 1");
}

std::string_view to_string(YKind kind) {
  switch (kind) {
    case YKind::Continuous: return "continuous";
    case YKind::Binary: return "binary";
    case YKind::Count: return "count";
  }
  return "unknown";
}

CovariateLaw CovariateLaw::from_family(std::function<Family(double)> family) {
  CovariateLaw law;
  law.density = [family](double w, double x) { return pdf_or_pmf(family(x), w); };
  law.support = [family](double x) { return family(x).support(); };
  law.sampler = [family](double x, Rng& rng) { return draw(family(x), rng); };
  return law;
}

CovariateLaw CovariateLaw::normal(std::function<double(double)> mean,
                                  std::function<double(double)> sd) {
  CovariateLaw law = from_family([mean, sd](double x) { return Family::normal(mean(x), sd(x)); });
  law.gaussian = GaussianForm{mean, sd};
  return law;
}

CovariateLaw CovariateLaw::degenerate(std::function<double(double)> value) {
  CovariateLaw law;
  law.point_mass = value;
  law.support = [value](double x) {
    const double v = value(x);
    return Interval{v, v};
  };
  law.sampler = [value](double x, Rng&) { return value(x); };
  return law;
}

void ConditionalModel::set_y_family(std::function<Family(double, double)> family) {
  mean_yxw = [family](double x, double w) { return family(x, w).mean(); };
  density_yxw = [family](double y, double x, double w) { return pdf_or_pmf(family(x, w), y); };
  cdf_yxw = [family](double y, double x, double w) { return cdf(family(x, w), y); };
  sampler_yxw = [family](double x, double w, Rng& rng) { return draw(family(x, w), rng); };
  y_support.bounds = [family](double x, double w) { return family(x, w).support(); };
  y_support.parametric = true;
}

Interval ConditionalModel::y_bounds(double x, double w) const {
  if (y_support.bounds) return y_support.bounds(x, w);
  switch (y_kind) {
    case YKind::Count: return {0.0, kInf};
    case YKind::Binary: return {0.0, 1.0};
    default: return Interval::real_line();
  }
}

Interval ConditionalModel::marginal_y_bounds(double x) const {
  if (marginal_y_support) return marginal_y_support(x);
  if (y_kind == YKind::Count) return {0.0, kInf};
  if (y_kind == YKind::Binary) return {0.0, 1.0};
  if (y_support.bounds && !y_support.parametric) {
    return y_support.bounds(x, representative_w(covariate, x));
  }
  return Interval::real_line();
}

bool ConditionalModel::y_in_support(double y, double x, double w) const {
  const Interval b = y_bounds(x, w);
  switch (y_kind) {
    case YKind::Continuous: return b.contains(y);
    case YKind::Binary: return y == 0.0 || y == 1.0;
    case YKind::Count: return is_count_value(y) && b.contains_closed(y);
  }
  return false;
}

EstimatedReal expect_over_w(const CovariateLaw& law, double x, const RealFunction& g,
                            const EvalConfig& cfg, std::span<const double> breakpoints) {
  if (law.is_degenerate()) {
    const double v = finite_or_throw(g(law.point_mass(x)), "integrand");
    return {v, 0.0, 1};
  }
  require(static_cast<bool>(law.density) && static_cast<bool>(law.support),
          ErrorKind::MissingCapability, "covariate law has no density");
  if (cfg.quadrature.method == QuadratureMethod::GaussHermite && law.gaussian &&
      breakpoints.empty()) {
    return gauss_hermite_expectation(g, law.gaussian->mean(x), law.gaussian->sd(x), cfg.quadrature);
  }
  const Interval support = law.support(x);
  auto integrand = [&](double w) {
    const double d = law.density(w, x);
    if (d == 0.0) return 0.0;
    return d * g(w);
  };
  return integrate(integrand, support, breakpoints, cfg.quadrature);
}

std::pair<double, double> covariate_moments(const CovariateLaw& law, double x,
                                            const EvalConfig& cfg) {
  if (law.is_degenerate()) return {law.point_mass(x), 0.0};
  if (law.gaussian) return {law.gaussian->mean(x), law.gaussian->sd(x)};
  const double m = expect_over_w(law, x, [](double w) { return w; }, cfg).value;
  const double v = expect_over_w(law, x, [m](double w) { return (w - m) * (w - m); }, cfg).value;
  return {m, std::sqrt(std::max(v, 0.0))};
}

EstimatedReal conditional_mean(const ConditionalModel& model, double x, double w,
                               const EvalConfig& cfg) {
  if (model.has_mean()) return {finite_or_throw(model.mean_yxw(x, w), "E(Y|x,w)"), 0.0, 1};
  require(model.has_density(), ErrorKind::MissingCapability,
          model.name + ": neither a conditional mean nor a density is declared");
  auto pmf = [&](double y) { return model.density_yxw(y, x, w); };
  switch (model.y_kind) {
    case YKind::Binary:
      return {finite_or_throw(pmf(1.0), "P(Y=1|x,w)"), 0.0, 1};
    case YKind::Count: {
      long evals = 0;
      const double m = sum_over_counts(pmf, cfg, [&](int k, double p) {
        ++evals;
        return k * p;
      });
      return {m, 0.0, evals};
    }
    case YKind::Continuous:
      break;
  }
  return integrate([&](double y) { return y * pmf(y); }, model.y_bounds(x, w), cfg.quadrature);
}

EstimatedReal conditional_cdf(const ConditionalModel& model, double y, double x, double w,
                              const EvalConfig& cfg) {
  if (model.has_cdf()) return {finite_or_throw(model.cdf_yxw(y, x, w), "F(y|x,w)"), 0.0, 1};
  require(model.has_density(), ErrorKind::MissingCapability,
          model.name + ": neither a conditional cdf nor a density is declared");
  const Interval b = model.y_bounds(x, w);
  if (model.y_kind != YKind::Continuous) {
    double total = 0.0;
    long evals = 0;
    for (double k = std::max(0.0, b.lower); k <= std::floor(y) && k <= b.upper; k += 1.0) {
      total += model.density_yxw(k, x, w);
      ++evals;
      if (evals > cfg.max_count) break;
    }
    return {std::min(total, 1.0), 0.0, std::max(evals, 1L)};
  }
  if (y <= b.lower) return {0.0, 0.0, 1};
  if (y >= b.upper) return {1.0, 0.0, 1};
  return integrate([&](double t) { return model.density_yxw(t, x, w); }, {b.lower, y},
                   cfg.quadrature);
}

EstimatedReal marginal_mean(const ConditionalModel& model, double x, const EvalConfig& cfg) {
  require(model.has_mean() || model.has_density(), ErrorKind::MissingCapability,
          model.name + ": marginal mean needs a conditional mean or density");
  double inner_err = 0.0;
  auto r = expect_over_w(
      model.covariate, x,
      [&](double w) {
        auto m = conditional_mean(model, x, w, cfg);
        inner_err = std::max(inner_err, m.err_estimate);
        return m.value;
      },
      cfg);
  r.err_estimate += inner_err;
  return r;
}

EstimatedReal marginal_density(const ConditionalModel& model, double y, double x,
                               const EvalConfig& cfg) {
  require(model.has_density(), ErrorKind::MissingCapability,
          model.name + ": marginal density needs a conditional density");
  if (model.y_kind != YKind::Continuous && !is_count_value(y)) return {0.0, 0.0, 1};
  std::vector<double> breaks;
  if (model.y_support.w_breakpoints) breaks = model.y_support.w_breakpoints(y, x);
  return expect_over_w(
      model.covariate, x,
      [&](double w) { return model.y_in_support(y, x, w) ? model.density_yxw(y, x, w) : 0.0; },
      cfg, breaks);
}

EstimatedReal marginal_cdf(const ConditionalModel& model, double y, double x,
                           const EvalConfig& cfg) {
  require(model.has_cdf() || model.has_density(), ErrorKind::MissingCapability,
          model.name + ": marginal cdf needs a conditional cdf or density");
  std::vector<double> breaks;
  if (model.y_support.w_breakpoints) breaks = model.y_support.w_breakpoints(y, x);
  double inner_err = 0.0;
  auto r = expect_over_w(
      model.covariate, x,
      [&](double w) {
        auto c = conditional_cdf(model, y, x, w, cfg);
        inner_err = std::max(inner_err, c.err_estimate);
        return c.value;
      },
      cfg, breaks);
  r.err_estimate += inner_err;
  return r;
}

EstimatedReal marginal_pmf(const ConditionalModel& model, long y, double x, const EvalConfig& cfg) {
  require(model.y_kind != YKind::Continuous, ErrorKind::InvalidParams,
          model.name + ": marginal_pmf needs binary or count Y");
  require(model.has_density(), ErrorKind::MissingCapability,
          model.name + ": marginal pmf needs a conditional pmf");
  if (y < 0) return {0.0, 0.0, 1};
  return marginal_density(model, static_cast<double>(y), x, cfg);
}

std::vector<double> marginal_pmf_table(const ConditionalModel& model, double x,
                                       const EvalConfig& cfg) {
  std::vector<double> table;
  double mass = 0.0;
  for (long k = 0; k <= cfg.max_count; ++k) {
    const double p = marginal_pmf(model, k, x, cfg).value;
    table.push_back(p);
    mass += p;
    if (mass > 1.0 - cfg.count_tail) return table;
    if (model.y_kind == YKind::Binary && k == 1) return table;
  }
  throw Error(ErrorKind::NonConvergence, model.name + ": marginal pmf tail does not vanish");
}

void validate_model(const ConditionalModel& model, std::span<const double> probe_x,
                    const EvalConfig& cfg) {
  cfg.validate();
  require(model.has_mean() || model.has_density(), ErrorKind::MissingCapability,
          model.name + ": a model needs a conditional mean or density");
  const bool have_law = model.covariate.is_degenerate() ||
                        (model.covariate.density && model.covariate.support);
  require(have_law, ErrorKind::MissingCapability, model.name + ": covariate law is incomplete");
  for (double x : probe_x) {
    if (!model.covariate.is_degenerate()) {
      const double mass = expect_over_w(model.covariate, x, [](double) { return 1.0; }, cfg).value;
      require(std::abs(mass - 1.0) <= 1e-6, ErrorKind::InvalidParams,
              model.name + ": f(w|x) integrates to " + std::to_string(mass) + " at x=" +
                  std::to_string(x));
    }
    if (!(model.has_mean() && model.has_density())) continue;
    const auto [m, s] = covariate_moments(model.covariate, x, cfg);
    const Interval support = model.covariate.support(x);
    for (double w : {m - 0.5 * s, m, m + 0.5 * s}) {
      if (!model.covariate.is_degenerate() && !support.contains(w)) continue;
      ConditionalModel density_only = model;
      density_only.mean_yxw = nullptr;
      const double from_density = conditional_mean(density_only, x, w, cfg).value;
      const double declared = model.mean_yxw(x, w);
      require(std::abs(from_density - declared) <= 1e-6 * std::max(1.0, std::abs(declared)),
              ErrorKind::InvalidParams,
              model.name + ": declared E(Y|x,w)=" + std::to_string(declared) +
                  " disagrees with the density's mean " + std::to_string(from_density) +
                  " at (x,w)=(" + std::to_string(x) + "," + std::to_string(w) + ")");
    }
  }
}

namespace {

// f_X(x) is a double integral and is requested over and over by the
// conditional densities, so it is memoized per x.
class JointConditioner {
 public:
  explicit JointConditioner(JointDensitySpec spec) : spec_(std::move(spec)) {
    y_breaks_ = panel_edges(spec_.y_box);
    w_breaks_ = panel_edges(spec_.w_box);
    // the outer w-integral sees inner quadrature error as noise
    inner_ = spec_.quadrature;
    inner_.abs_tol *= 0.01;
    inner_.rel_tol *= 0.01;
  }

  double joint(double x, double y, double w) const {
    const double v = spec_.density(x, y, w);
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorKind::NonFiniteEvaluation, "joint density is " + std::to_string(v));
    }
    return v;
  }

  double over_y(const RealFunction& g, Interval range) const {
    return integrate(g, range, y_breaks_, inner_).value;
  }

  double f_xw(double x, double w) const {
    return over_y([&](double y) { return joint(x, y, w); }, spec_.y_box);
  }

  double f_x(double x) const {
    const auto key = std::bit_cast<std::uint64_t>(x);
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const double v = integrate([&](double w) { return f_xw(x, w); }, spec_.w_box, w_breaks_,
                               spec_.quadrature)
                         .value;
    std::lock_guard lock(mutex_);
    cache_.emplace(key, v);
    return v;
  }

  const JointDensitySpec& spec() const { return spec_; }

 private:
  std::vector<double> panel_edges(Interval box) const {
    std::vector<double> edges;
    for (int i = 1; i < spec_.panels; ++i) edges.push_back(box.lower + box.width() * i / spec_.panels);
    return edges;
  }

  JointDensitySpec spec_;
  QuadratureSpec inner_;
  std::vector<double> y_breaks_;
  std::vector<double> w_breaks_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, double> cache_;
};

constexpr double kDegenerate = 1e-12;

}  // namespace

ConditionalModel condition_from_joint(const JointDensitySpec& spec, std::string name) {
  require(static_cast<bool>(spec.density), ErrorKind::InvalidParams, "joint density is missing");
  spec.x_box.validate();
  spec.y_box.validate();
  spec.w_box.validate();
  require(spec.x_box.is_finite() && spec.y_box.is_finite() && spec.w_box.is_finite(),
          ErrorKind::InvalidParams, "joint density box must be finite");
  require(spec.panels >= 1, ErrorKind::InvalidParams, "joint density needs at least 1 panel");
  spec.quadrature.validate();

  auto c = std::make_shared<const JointConditioner>(spec);
  ConditionalModel m;
  m.name = std::move(name);
  m.x_domain = spec.x_box;

  m.covariate.support = [c](double) { return c->spec().w_box; };
  m.covariate.density = [c](double w, double x) {
    if (!c->spec().w_box.contains_closed(w)) return 0.0;
    const double fx = c->f_x(x);
    if (fx < kDegenerate) {
      throw Error(ErrorKind::DegenerateConditional,
                  "f_X(" + std::to_string(x) + ") = " + std::to_string(fx));
    }
    const double fxw = c->f_xw(x, w);
    // conditioning events this improbable are left out of the w-support
    return fxw < kDegenerate ? 0.0 : fxw / fx;
  };

  auto conditioning = [c](double x, double w) {
    const double fxw = c->f_xw(x, w);
    if (fxw < kDegenerate) {
      throw Error(ErrorKind::DegenerateConditional, "f_XW(" + std::to_string(x) + ", " +
                                                        std::to_string(w) + ") = " +
                                                        std::to_string(fxw));
    }
    return fxw;
  };

  m.density_yxw = [c, conditioning](double y, double x, double w) {
    if (!c->spec().y_box.contains_closed(y)) return 0.0;
    return c->joint(x, y, w) / conditioning(x, w);
  };
  m.mean_yxw = [c, conditioning](double x, double w) {
    const double first = c->over_y([&](double y) { return y * c->joint(x, y, w); }, c->spec().y_box);
    return first / conditioning(x, w);
  };
  m.cdf_yxw = [c, conditioning](double y, double x, double w) {
    const Interval box = c->spec().y_box;
    if (y <= box.lower) return 0.0;
    if (y >= box.upper) return 1.0;
    const double part = c->over_y([&](double t) { return c->joint(x, t, w); }, {box.lower, y});
    return std::min(1.0, part / conditioning(x, w));
  };
  m.y_support.bounds = [c](double, double) { return c->spec().y_box; };
  m.y_support.parametric = false;
  return m;
}

double reassembled_joint(const ConditionalModel& model, const std::function<double(double)>& marginal_x,
                         double x, double y, double w) {
  const double fw = model.covariate.density(w, x);
  if (fw == 0.0) return 0.0;
  return marginal_x(x) * fw * model.density_yxw(y, x, w);
}

std::string_view to_string(HomogeneityQuantity q) {
  switch (q) {
    case HomogeneityQuantity::Mean: return "mean";
    case HomogeneityQuantity::Density: return "density";
    case HomogeneityQuantity::LogDensitySlopeY: return "log-density-slope-y";
    case HomogeneityQuantity::LogDensitySlopeX: return "log-density-slope-x";
  }
  return "unknown";
}

namespace {

EstimatedReal slope(const RealFunction& log_f, double at, Interval room, const EvalConfig& cfg) {
  return detail::with_shrinking_steps([&](double scale) {
    const double h = detail::local_step(at, room, cfg.diff.base_step) * scale;
    return differentiate(log_f, at, detail::spec_for_step(cfg.diff, at, h), room);
  });
}

double positive_log(double v) {
  if (!(v > 0.0)) {
    throw Error(ErrorKind::NonPositiveDensity, "density " + std::to_string(v) + " on the stencil");
  }
  return std::log(v);
}

}  // namespace

EstimatedReal log_density_slope_y(const ConditionalModel& m, double y, double x,
                                  std::optional<double> w, const EvalConfig& cfg) {
  require(m.has_density(), ErrorKind::MissingCapability,
          m.name + ": log-density slopes need a conditional density");
  if (w) {
    return slope([&](double t) { return positive_log(m.y_in_support(t, x, *w) ? m.density_yxw(t, x, *w) : 0.0); },
                 y, m.y_bounds(x, *w), cfg);
  }
  return slope([&](double t) { return positive_log(marginal_density(m, t, x, cfg).value); }, y,
               m.marginal_y_bounds(x), cfg);
}

EstimatedReal log_density_slope_x(const ConditionalModel& m, double y, double x,
                                  std::optional<double> w, const EvalConfig& cfg) {
  require(m.has_density(), ErrorKind::MissingCapability,
          m.name + ": log-density slopes need a conditional density");
  if (w) {
    return slope([&](double s) { return positive_log(m.y_in_support(y, s, *w) ? m.density_yxw(y, s, *w) : 0.0); },
                 x, m.x_domain, cfg);
  }
  return slope([&](double s) { return positive_log(marginal_density(m, y, s, cfg).value); }, x,
               m.x_domain, cfg);
}

HomogeneityReport homogeneity_probe(const ConditionalModel& model, std::span<const double> x_grid,
                                    std::span<const double> y_grid, std::span<const double> w_grid,
                                    HomogeneityQuantity which, const EvalConfig& cfg,
                                    double tolerance) {
  require(!x_grid.empty() && !w_grid.empty(), ErrorKind::InvalidParams,
          "homogeneity probe needs x and w points");
  HomogeneityReport report{which, 0.0, tolerance, true, 0};
  if (which == HomogeneityQuantity::Mean) {
    require(model.has_mean() || model.has_density(), ErrorKind::MissingCapability,
            model.name + ": mean homogeneity needs a mean or density");
    for (double x : x_grid) {
      const double ref = conditional_mean(model, x, w_grid.front(), cfg).value;
      for (double w : w_grid) {
        report.max_deviation =
            std::max(report.max_deviation, std::abs(conditional_mean(model, x, w, cfg).value - ref));
      }
    }
  } else {
    require(model.has_density(), ErrorKind::MissingCapability,
            model.name + ": density homogeneity needs a conditional density");
    require(!y_grid.empty(), ErrorKind::InvalidParams, "density probes need y points");
    for (double x : x_grid) {
      for (double y : y_grid) {
        std::optional<double> ref;
        for (double w : w_grid) {
          const bool inside = model.y_in_support(y, x, w);
          double q = 0.0;
          if (which == HomogeneityQuantity::Density) {
            q = inside ? model.density_yxw(y, x, w) : 0.0;
          } else if (!inside) {
            ++report.skipped;
            continue;
          } else if (which == HomogeneityQuantity::LogDensitySlopeY) {
            q = log_density_slope_y(model, y, x, w, cfg).value;
          } else {
            q = log_density_slope_x(model, y, x, w, cfg).value;
          }
          if (!ref) {
            ref = q;
          } else {
            report.max_deviation = std::max(report.max_deviation, std::abs(q - *ref));
          }
        }
      }
    }
  }
  report.homogeneous = report.max_deviation <= tolerance;
  return report;
}

}  // namespace collapse
