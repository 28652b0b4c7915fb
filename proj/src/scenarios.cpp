#include "collapse/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>

#include "collapse/errors.hpp"
#include "collapse/models.hpp"
#include "detail.hpp"

namespace collapse {
namespace {

using detail::require;
using Params = std::map<std::string, double>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double phi(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }
double Phi(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

// ---- closed forms -------------------------------------------------------

double uniform_normal_mean(double x) { return 0.5 * (x * x + 1.0); }

// x y^(x-1) (x^2 + lambda^2 + 1): the power-density marginal when the
// support indicator never bites
double power_marginal_ideal(double y, double x, double lambda) {
  return x * std::pow(y, x - 1.0) * (x * x + lambda * lambda + 1.0);
}

// The same marginal with the indicator honoured (lambda = 0):
// x y^(x-1) [(x^2 + 1)(2 Phi(T) - 1) - 2 T phi(T)], T^2 = y^-x - x^2.
double power_marginal_truncated(double y, double x) {
  const double t2 = std::pow(y, -x) - x * x;
  if (!(t2 > 0.0)) return 0.0;
  const double t = std::sqrt(t2);
  return x * std::pow(y, x - 1.0) * ((x * x + 1.0) * (2.0 * Phi(t) - 1.0) - 2.0 * t * phi(t));
}

// NB(size r, success probability p) at k, written out with lgamma
double nb_pmf(double k, double r, double p) {
  return std::exp(std::lgamma(k + r) - std::lgamma(r) - std::lgamma(k + 1.0) + r * std::log(p) +
                  k * std::log1p(-p));
}

double poisson_gamma_pmf(double k, double x, double alpha, double beta) {
  const double lambda = models::log_linear_rate(alpha, beta, x);
  return nb_pmf(k, x, x / (x + lambda));
}

double nb_regression_pmf(double k, double x, double theta, double alpha, double beta) {
  const double lambda = models::log_linear_rate(alpha, beta, x);
  return nb_pmf(k, theta, theta / (theta + lambda));
}

// ---- split-covariate builders -------------------------------------------

// Y | x,w1,w2 ~ N(x + w2, 1), W1 | x ~ N(x, 1), W2 | x ~ N(shift x, 1)
BivariateCovariateModel split_model(double shift, std::string name) {
  BivariateCovariateModel m;
  m.name = std::move(name);
  m.w1 = CovariateLaw::normal([](double x) { return x; }, [](double) { return 1.0; });
  m.w2 = CovariateLaw::normal([shift](double x) { return shift * x; }, [](double) { return 1.0; });
  m.mean_yxw = [](double x, double, double w2) { return x + w2; };
  m.density_yxw = [](double y, double x, double, double w2) { return phi(y - x - w2); };
  return m;
}

// ---- check plumbing -----------------------------------------------------

struct Context {
  const Scenario& scenario;
  const RunOptions& options;
  Params params;
  EvalConfig cfg;
  GridSpec grid;
  CheckOptions check_options;
  std::vector<CheckRecord> records;

  template <class Fn>
  void check(const std::string& name, Fn&& body) {
    CheckRecord r;
    r.name = name;
    r.status = CheckStatus::Pass;
    try {
      body(r);
    } catch (const Error& e) {
      if (!is_numerical(e.kind())) throw;
      r.status = CheckStatus::Indeterminate;
      r.note = e.what();
    }
    records.push_back(std::move(r));
  }

  ConditionalModel model() const { return scenario.conditional_model(params); }
};

// Folds one comparison into the record, which keeps the worst point.
void compare(CheckRecord& r, double observed, double reference, double tol) {
  const double gap = std::abs(observed - reference);
  if (!(gap <= tol)) r.status = CheckStatus::Fail;
  if (std::isnan(r.gap) || !(gap <= r.gap)) {
    r.observed = observed;
    r.reference = reference;
    r.gap = gap;
    r.tolerance = tol;
  }
}

void expect_verdict(CheckRecord& r, CollapsibilityVerdict v, Classification expected) {
  if (v.classification == Classification::Indeterminate && expected != Classification::Indeterminate) {
    r.status = CheckStatus::Indeterminate;
  } else if (v.classification != expected) {
    r.status = CheckStatus::Fail;
  }
  if (r.note.empty()) r.note = std::string("classification ") + std::string(to_string(v.classification));
  r.verdict = std::move(v);
}

void expect_probe(CheckRecord& r, const std::vector<ConditionProbe>& probes, const std::string& name,
                  ProbeStatus expected) {
  for (const auto& p : probes) {
    if (p.name != name) continue;
    if (p.status == ProbeStatus::Unavailable) {
      r.status = CheckStatus::Indeterminate;
    } else if (p.status != expected) {
      r.status = CheckStatus::Fail;
    }
    if (!r.note.empty()) r.note += "; ";
    r.note += name + " " + std::string(to_string(p.status));
    r.probes = probes;
    return;
  }
  throw Error(ErrorKind::InvalidParams, "no probe named " + name);
}

GridSpec with_overrides(GridSpec g, const RunOptions& o) {
  if (o.x_points) g.x_points = *o.x_points;
  if (o.y_points) g.y_points = *o.y_points;
  if (o.tol_abs) g.tol_abs = *o.tol_abs;
  if (o.tol_rel) g.tol_rel = *o.tol_rel;
  return g;
}

SplitCovariateGrid split_grid(const GridSpec& g) {
  return {g.x_points, g.y_points, {-1.0, 0.0, 1.5}, {-1.0, 0.5}, g.tol_abs, g.tol_rel};
}

// ---- scenario bodies ----------------------------------------------------

void run_uniform_normal(Context& c) {
  const auto m = c.model();
  c.check("marginal_mean", [&](CheckRecord& r) {
    for (double x : c.grid.x_points) compare(r, marginal_mean(m, x, c.cfg).value, uniform_normal_mean(x), 1e-8);
  });
  c.check("edf_average", [&](CheckRecord& r) {
    auto v = check_average(MeasureKind::EDF, m, c.grid, c.cfg, c.check_options);
    for (const auto& p : v.points) {
      if (p.failure) continue;
      compare(r, p.conditional.value, p.x, 1e-5);
      compare(r, p.marginal.value, p.x, 1e-5);
    }
    expect_verdict(r, std::move(v), Classification::AverageCollapsible);
  });
  c.check("edf_residual", [&](CheckRecord& r) {
    for (double x : c.grid.x_points) compare(r, edf_residual(m, x, c.cfg).value, 0.0, 1e-6);
  });
  c.check("sufficient_conditions_fail", [&](CheckRecord& r) {
    const auto probes = probe_conditions(m, c.grid, c.cfg);
    expect_probe(r, probes, "mean_free_of_w", ProbeStatus::Fail);
    expect_probe(r, probes, "x_independent_of_w", ProbeStatus::Fail);
    expect_probe(r, probes, "y_independent_of_w_given_x", ProbeStatus::Fail);
  });
}

void run_homogeneous_uniform(Context& c) {
  const auto m = c.model();
  c.check("conditional_mean", [&](CheckRecord& r) {
    for (double x : c.grid.x_points) {
      for (double w : c.grid.w_points) compare(r, conditional_mean(m, x, w, c.cfg).value, x, 1e-8);
    }
  });
  c.check("edf_simple", [&](CheckRecord& r) {
    auto v = check_simple(MeasureKind::EDF, m, c.grid, c.cfg, c.check_options);
    for (const auto& p : v.points) {
      if (!p.failure) compare(r, p.conditional.value, 1.0, 1e-6);
    }
    expect_verdict(r, std::move(v), Classification::SimpleCollapsible);
  });
  c.check("mean_homogeneous", [&](CheckRecord& r) {
    expect_probe(r, probe_conditions(m, c.grid, c.cfg), "mean_free_of_w", ProbeStatus::Pass);
  });
  c.check("y_depends_on_w", [&](CheckRecord& r) {
    expect_probe(r, probe_conditions(m, c.grid, c.cfg), "y_independent_of_w_given_x", ProbeStatus::Fail);
  });
}

void run_homogeneous_gamma(Context& c) {
  const auto m = c.model();
  c.check("conditional_mean", [&](CheckRecord& r) {
    for (double x : c.grid.x_points) {
      for (double w : c.grid.w_points) compare(r, conditional_mean(m, x, w, c.cfg).value, x, 1e-8);
    }
  });
  c.check("marginal_mean", [&](CheckRecord& r) {
    for (double x : c.grid.x_points) compare(r, marginal_mean(m, x, c.cfg).value, x, 1e-8);
  });
  c.check("edf_simple", [&](CheckRecord& r) {
    auto v = check_simple(MeasureKind::EDF, m, c.grid, c.cfg, c.check_options);
    for (const auto& p : v.points) {
      if (!p.failure) compare(r, p.conditional.value, 1.0, 1e-6);
    }
    expect_verdict(r, std::move(v), Classification::SimpleCollapsible);
  });
  c.check("led_simple", [&](CheckRecord& r) {
    auto v = check_simple(MeasureKind::LED, m, c.grid, c.cfg, c.check_options);
    for (const auto& p : v.points) {
      if (!p.failure) compare(r, p.conditional.value, 1.0 / p.x, 1e-6);
    }
    expect_verdict(r, std::move(v), Classification::SimpleCollapsible);
  });
  c.check("mean_homogeneous", [&](CheckRecord& r) {
    expect_probe(r, probe_conditions(m, c.grid, c.cfg), "mean_free_of_w", ProbeStatus::Pass);
  });
}

void run_power_density(Context& c, bool tempered) {
  const double lambda = tempered ? c.params.at("lambda") : 0.0;
  const auto m = c.model();
  c.check("conditional_mdi", [&](CheckRecord& r) {
    for (double x : c.grid.x_points) {
      for (double y : c.grid.y_points) {
        for (double w : c.grid.w_points) {
          if (m.y_in_support(y, x, w)) compare(r, mdi(m, y, x, w, c.cfg).value, 1.0 / y, 1e-3);
        }
      }
    }
  });
  if (!tempered) {
    c.check("marginal_density_truncated", [&](CheckRecord& r) {
      for (double x : {0.75, 1.0, 1.5}) {
        for (double y : {0.05, 0.2, 0.5}) {
          compare(r, marginal_density(m, y, x, c.cfg).value, power_marginal_truncated(y, x), 1e-8);
        }
      }
    });
  }
  c.check("marginal_density_ideal", [&](CheckRecord& r) {
    for (double x : {1.0, 1.5, 2.0}) {
      compare(r, marginal_density(m, 0.01, x, c.cfg).value, power_marginal_ideal(0.01, x, lambda), 1e-4);
    }
  });
  c.check("marginal_density_at_0.05_1", [&](CheckRecord& r) {
    compare(r, marginal_density(m, 0.05, 1.0, c.cfg).value, power_marginal_ideal(0.05, 1.0, lambda), 1e-4);
  });
  c.check("mdi_average", [&](CheckRecord& r) {
    auto v = check_average(MeasureKind::MDI, m, c.grid, c.cfg, c.check_options);
    for (const auto& p : v.points) {
      if (!p.failure) compare(r, p.marginal.value, 1.0 / *p.y, 1e-3);
    }
    expect_verdict(r, std::move(v), Classification::AverageCollapsible);
  });
  if (tempered) return;
  c.check("marginal_mdi_full_grid", [&](CheckRecord& r) {
    for (double x : {0.75, 1.0, 1.5}) {
      for (double y : {0.02, 0.05}) compare(r, mdi(m, y, x, std::nullopt, c.cfg).value, 1.0 / y, 1e-3);
    }
  });
  c.check("slope_condition_holds", [&](CheckRecord& r) {
    expect_probe(r, probe_conditions(m, c.grid, c.cfg), "y_log_slope_matches_marginal", ProbeStatus::Pass);
  });
  c.check("y_depends_on_w", [&](CheckRecord& r) {
    expect_probe(r, probe_conditions(m, c.grid, c.cfg), "y_independent_of_w_given_x", ProbeStatus::Fail);
  });
}

void run_poisson_gamma(Context& c) {
  const double alpha = c.params.at("alpha");
  const double beta = c.params.at("beta");
  const auto m = c.model();
  c.check("nb_pmf", [&](CheckRecord& r) {
    for (double x : {1.0, 2.0}) {
      for (long k = 0; k <= 50; ++k) {
        compare(r, marginal_pmf(m, k, x, c.cfg).value, poisson_gamma_pmf(static_cast<double>(k), x, alpha, beta),
                1e-8);
      }
    }
  });
  c.check("flat_rate_zero_mass", [&](CheckRecord& r) {
    compare(r, marginal_pmf(models::poisson_gamma(0.0, 0.0), 0, 1.0, c.cfg).value, 0.5, 1e-10);
  });
  c.check("led_simple", [&](CheckRecord& r) {
    auto v = check_simple(MeasureKind::LED, m, c.grid, c.cfg, c.check_options);
    for (const auto& p : v.points) {
      if (p.failure) continue;
      compare(r, p.conditional.value, beta, 1e-6);
      compare(r, p.marginal.value, beta, 1e-6);
    }
    expect_verdict(r, std::move(v), Classification::SimpleCollapsible);
  });
}

void run_nb_regression(Context& c) {
  const double theta = c.params.at("theta");
  const double alpha = c.params.at("alpha");
  const double beta = c.params.at("beta");
  const auto m = c.model();
  c.check("nb_pmf", [&](CheckRecord& r) {
    for (double x : {1.0, 2.0}) {
      for (long k = 0; k <= 50; ++k) {
        compare(r, marginal_pmf(m, k, x, c.cfg).value,
                nb_regression_pmf(static_cast<double>(k), x, theta, alpha, beta), 1e-8);
      }
    }
  });
  c.check("variance_identity", [&](CheckRecord& r) {
    for (double x : {1.0, 2.0}) {
      const auto table = marginal_pmf_table(m, x, c.cfg);
      double mean = 0.0;
      for (std::size_t k = 0; k < table.size(); ++k) mean += static_cast<double>(k) * table[k];
      double var = 0.0;
      for (std::size_t k = 0; k < table.size(); ++k) var += std::pow(static_cast<double>(k) - mean, 2) * table[k];
      const double lambda = models::log_linear_rate(alpha, beta, x);
      compare(r, var, lambda * (1.0 + lambda / theta), 1e-6);
      if (!(var > mean)) r.status = CheckStatus::Fail;
    }
  });
  c.check("led_simple", [&](CheckRecord& r) {
    auto v = check_simple(MeasureKind::LED, m, c.grid, c.cfg, c.check_options);
    for (const auto& p : v.points) {
      if (!p.failure) compare(r, p.marginal.value, beta, 1e-6);
    }
    expect_verdict(r, std::move(v), Classification::SimpleCollapsible);
  });
  c.check("x_independent_of_w", [&](CheckRecord& r) {
    expect_probe(r, probe_conditions(m, c.grid, c.cfg), "x_independent_of_w", ProbeStatus::Pass);
  });
}

void run_product_mean(Context& c) {
  const auto m = c.model();
  CollapsibilityVerdict v = check_average(MeasureKind::EDF, m, c.grid, c.cfg, c.check_options);
  c.check("edf_average", [&](CheckRecord& r) {
    for (const auto& p : v.points) {
      if (!p.failure) compare(r, p.gap, p.x, 1e-5);
    }
    expect_verdict(r, v, Classification::NotCollapsible);
  });
  c.check("decomposition", [&](CheckRecord& r) {
    for (const auto& p : v.points) {
      if (p.failure) throw Error(ErrorKind::NonConvergence, *p.failure);
      const auto res = edf_residual(m, p.x, c.cfg);
      const double budget = p.marginal.err_estimate + p.conditional.err_estimate + res.err_estimate + 1e-9;
      compare(r, p.marginal.value, p.conditional.value + res.value, budget);
    }
  });
  c.check("residual_closed_form", [&](CheckRecord& r) {
    for (double x : c.grid.x_points) compare(r, edf_residual(m, x, c.cfg).value, x, 1e-6);
  });
}

void run_cochran(Context& c) {
  const auto m = c.model();
  c.check("reversal", [&](CheckRecord& r) {
    auto rev = detect_reversal(MeasureKind::EDF, m, c.grid, c.cfg);
    if (!rev.reversal) r.status = CheckStatus::Fail;
    r.note = rev.reversal ? "reversal flagged" : "no reversal";
    r.reversal = std::move(rev);
  });
  c.check("edf_average", [&](CheckRecord& r) {
    auto v = check_average(MeasureKind::EDF, m, c.grid, c.cfg, c.check_options);
    for (const auto& p : v.points) {
      if (!p.failure) compare(r, p.gap, 2.0, 1e-5);
    }
    expect_verdict(r, std::move(v), Classification::NotCollapsible);
  });
  c.check("ols_slopes", [&](CheckRecord& r) {
    RegressionSpec spec;
    spec.name = "cochran_reversal";
    spec.family = RegressionFamily::Linear;
    spec.beta = 1.0;
    spec.gamma = -1.0;
    spec.covariate = CovariateLaw::normal([](double x) { return 2.0 * x; }, [](double) { return 1.0; });
    const std::vector<double> probe_x{0.0};
    for (std::uint64_t s = 0; s < 5; ++s) {
      auto b = check_beta_collapsibility(spec, 100000, Family::normal(0.0, 1.0), Seed{c.options.seed + s}, probe_x);
      const auto& marg = b.marginal;
      const auto& cond = b.conditional.front();
      compare(r, marg.slope(), -1.0, 3.0 * marg.slope_se());
      compare(r, cond.slope(), 1.0, 3.0 * cond.slope_se());
      if (!b.reversal) r.status = CheckStatus::Fail;
      if (s == 0) r.regression = std::move(b);
    }
  });
}

void run_xwy_chain(Context& c) {
  const auto m = c.model();
  c.check("x_independent_of_w_given_y", [&](CheckRecord& r) {
    const auto probes = probe_conditions(m, c.grid, c.cfg);
    expect_probe(r, probes, "x_independent_of_w_given_y", ProbeStatus::Pass);
    for (const auto& p : probes) {
      if (p.name == "x_independent_of_w_given_y") compare(r, p.deviation, 0.0, 1e-4);
    }
  });
  c.check("mdi_average", [&](CheckRecord& r) {
    auto v = check_average(MeasureKind::MDI, m, c.grid, c.cfg, c.check_options);
    // Y | x ~ N(x/2, 1/2) and Y | x,w ~ N((x+w)/3, 1/3): both MDIs are 1
    for (const auto& p : v.points) {
      if (p.failure) continue;
      compare(r, p.marginal.value, 1.0, 1e-4);
      compare(r, p.conditional.value, 1.0, 1e-4);
    }
    expect_verdict(r, std::move(v), Classification::AverageCollapsible);
  });
}

void run_bivariate(Context& c, bool broken) {
  const auto m = c.scenario.bivariate_model();
  const auto grid = split_grid(c.grid);
  c.check("edf_average", [&](CheckRecord& r) {
    auto v = check_average_bivariate(MeasureKind::EDF, m, grid, c.cfg, c.check_options);
    for (const auto& p : v.points) {
      if (p.failure) continue;
      compare(r, p.conditional.value, 1.0, 1e-5);
      if (broken) {
        compare(r, p.gap, 1.0, 1e-4);
      } else {
        compare(r, p.marginal.value, 1.0, 1e-5);
      }
    }
    expect_verdict(r, std::move(v), broken ? Classification::NotCollapsible : Classification::AverageCollapsible);
  });
  c.check("probes", [&](CheckRecord& r) {
    const auto probes = probe_conditions_bivariate(m, grid, c.cfg);
    expect_probe(r, probes, "y_independent_of_w1_given_x_w2", ProbeStatus::Pass);
    expect_probe(r, probes, "x_independent_of_w2", broken ? ProbeStatus::Fail : ProbeStatus::Pass);
    expect_probe(r, probes, "w1_independent_of_w2_given_x", ProbeStatus::Pass);
  });
}

// ---- catalog --------------------------------------------------------------

ExpectedCheck expect(std::string name, std::string description, Origin origin, std::string expected,
                     double tol, bool informational = false) {
  return {std::move(name), std::move(description), origin, std::move(expected), tol, informational};
}

ClosedForm form(std::string name, std::string args, std::string formula, std::function<double(double, double)> f) {
  return {std::move(name), std::move(args), std::move(formula), std::move(f)};
}

template <class Fn>
std::function<std::vector<CheckRecord>(const Scenario&, const RunOptions&)> body(Fn fn);

std::vector<Scenario> build_catalog() {
  std::vector<Scenario> out;
  const std::vector<double> x4{0.5, 1.0, 1.5, 2.0};

  {
    Scenario s;
    s.name = "uniform_normal";
    s.description = "Y|x,w ~ U(0, x^2+(w-x)^2), W|x ~ N(x,1): EDF average collapsible with no sufficient condition";
    s.closed_forms = {
        form("marginal_mean", "x", "0.5*(x^2+1)", [](double x, double) { return uniform_normal_mean(x); }),
        form("edf", "x", "x", [](double x, double) { return x; }),
        form("edf_residual", "x", "0", [](double, double) { return 0.0; })};
    s.expected = {
        expect("marginal_mean", "E(Y|x) by mixing equals 0.5*(x^2+1)", Origin::ClosedForm, "0.5*(x^2+1)", 1e-8),
        expect("edf_average", "conditional-average and marginal EDF both equal x", Origin::ClosedForm,
               "average-collapsible", 1e-5),
        expect("edf_residual", "residual term vanishes", Origin::ClosedForm, "0", 1e-6),
        expect("sufficient_conditions_fail", "mean homogeneity and both independences fail", Origin::ClosedForm,
               "fail", 0.0)};
    s.grid = {x4, {0.1, 0.2}, {-0.5, 0.5, 1.0}};
    s.conditional_model = [](const Params&) { return models::uniform_normal(); };
    s.runner = body(run_uniform_normal);
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "homogeneous_uniform";
    s.description = "Y|x,w ~ U(x-w, x+w), W>0: E(Y|x,w) = x free of w while Y depends on W";
    s.closed_forms = {form("conditional_mean", "x", "x", [](double x, double) { return x; }),
                      form("edf", "x", "1", [](double, double) { return 1.0; })};
    s.expected = {
        expect("conditional_mean", "E(Y|x,w) = x", Origin::ClosedForm, "x", 1e-8),
        expect("edf_simple", "EDF is 1 in every stratum and marginally", Origin::ClosedForm, "simple-collapsible",
               1e-6),
        expect("mean_homogeneous", "mean homogeneity probe passes", Origin::ClosedForm, "pass", 0.0),
        expect("y_depends_on_w", "Y independent of W given X fails", Origin::ClosedForm, "fail", 0.0)};
    s.grid = {x4, {0.7, 1.2}, {0.5, 1.0, 2.0}};
    s.conditional_model = [](const Params&) { return models::homogeneous_uniform(); };
    s.runner = body(run_homogeneous_uniform);
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "homogeneous_gamma";
    s.description = "W|x ~ G(x,1), Y|x,w ~ G(w, wx): E(Y|x,w) = x";
    s.closed_forms = {form("conditional_mean", "x", "x", [](double x, double) { return x; }),
                      form("led", "x", "1/x", [](double x, double) { return 1.0 / x; })};
    s.expected = {
        expect("conditional_mean", "E(Y|x,w) = x", Origin::ClosedForm, "x", 1e-8),
        expect("marginal_mean", "E(Y|x) = x", Origin::ClosedForm, "x", 1e-8),
        expect("edf_simple", "EDF is 1 everywhere", Origin::ClosedForm, "simple-collapsible", 1e-6),
        expect("led_simple", "LED is 1/x everywhere", Origin::ClosedForm, "simple-collapsible", 1e-6),
        expect("mean_homogeneous", "mean homogeneity probe passes", Origin::ClosedForm, "pass", 0.0)};
    s.grid = {{0.5, 1.0, 2.0}, {0.5, 1.5}, {0.5, 1.0, 2.0}};
    s.conditional_model = [](const Params&) { return models::homogeneous_gamma(); };
    s.runner = body(run_homogeneous_gamma);
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "power_density";
    s.description = "f(y|x,w) = x y^(x-1) (x^2+(w-x)^2) on its support, W|x ~ N(x,1): MDI = 1/y on both sides";
    s.closed_forms = {
        form("mdi", "y", "1/y", [](double, double y) { return 1.0 / y; }),
        form("marginal_density", "y,x", "x*y^(x-1)*(x^2+1)",
             [](double x, double y) { return power_marginal_ideal(y, x, 0.0); }),
        form("marginal_density_truncated", "y,x",
             "x*y^(x-1)*((x^2+1)*(2*normcdf(T)-1) - 2*T*normpdf(T)), T = sqrt(y^-x - x^2)",
             [](double x, double y) { return power_marginal_truncated(y, x); })};
    s.expected = {
        expect("conditional_mdi", "conditional MDI is 1/y wherever y is in the support", Origin::ClosedForm, "1/y",
               1e-3),
        expect("marginal_density_truncated", "mixture density equals the truncated closed form", Origin::ClosedForm,
               "truncated formula", 1e-8),
        expect("marginal_density_ideal", "f(y|x) = x y^(x-1)(x^2+1) at y = 0.01", Origin::ClosedForm,
               "x*y^(x-1)*(x^2+1)", 1e-4),
        expect("marginal_density_at_0.05_1", "f(0.05|1) against 2.0, where the support truncation bites",
               Origin::ClosedForm, "2.0", 1e-4, true),
        expect("mdi_average", "MDI average collapsible on the safe grid", Origin::ClosedForm, "average-collapsible",
               1e-3),
        expect("marginal_mdi_full_grid", "marginal MDI against 1/y for y in {0.02,0.05}, x in {0.75,1,1.5}",
               Origin::ClosedForm, "1/y", 1e-3, true),
        expect("slope_condition_holds", "y log-slope probe passes", Origin::ClosedForm, "pass", 0.0),
        expect("y_depends_on_w", "Y independent of W given X fails", Origin::ClosedForm, "fail", 0.0)};
    s.grid = {{1.0, 1.5, 2.0}, {0.01, 0.02}, {0.0, 1.0, 2.0}};
    s.conditional_model = [](const Params&) { return models::power_density(); };
    s.runner = body([](Context& c) { run_power_density(c, false); });
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "power_density_tempered";
    s.description = "the power density with W|x ~ N(x - lambda, 1)";
    s.parameters = {{"lambda", 1.0}};
    s.closed_forms = {form("marginal_density", "y,x", "x*y^(x-1)*(x^2+lambda^2+1)",
                           [](double x, double y) { return power_marginal_ideal(y, x, 1.0); }),
                      form("mdi", "y", "1/y", [](double, double y) { return 1.0 / y; })};
    s.expected = {
        expect("conditional_mdi", "conditional MDI is 1/y", Origin::ClosedForm, "1/y", 1e-3),
        expect("marginal_density_ideal", "f(y|x) = x y^(x-1)(x^2+lambda^2+1) at y = 0.01", Origin::ClosedForm,
               "x*y^(x-1)*(x^2+lambda^2+1)", 1e-4),
        expect("marginal_density_at_0.05_1", "f(0.05|1) against 2+lambda^2, where the truncation bites",
               Origin::ClosedForm, "2+lambda^2", 1e-4, true),
        expect("mdi_average", "MDI average collapsible on the safe grid", Origin::ClosedForm, "average-collapsible",
               1e-3)};
    s.grid = {{1.0, 1.5, 2.0}, {0.005, 0.01}, {0.0, 1.0, 2.0}};
    s.conditional_model = [](const Params& p) { return models::power_density(p.at("lambda")); };
    s.runner = body([](Context& c) { run_power_density(c, true); });
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "poisson_gamma";
    s.description = "Y|x,w ~ Poi(lambda(x) w), W|x ~ G(x,x): Y|x is negative binomial and LED = beta";
    s.parameters = {{"alpha", 0.1}, {"beta", 0.3}};
    s.closed_forms = {form("marginal_pmf", "y,x", "NB(y; size x, prob x/(x+exp(alpha+beta*x)))",
                           [](double x, double y) { return poisson_gamma_pmf(y, x, 0.1, 0.3); }),
                      form("led", "x", "beta", [](double, double) { return 0.3; })};
    s.expected = {
        expect("nb_pmf", "mixture pmf equals the NB closed form for x in {1,2}, y = 0..50", Origin::ClosedForm,
               "NB(x, x/(x+lambda))", 1e-8),
        expect("flat_rate_zero_mass", "alpha = beta = 0 gives P(Y=0|x=1) = 1/2", Origin::ClosedForm, "0.5", 1e-10),
        expect("led_simple", "LED equals beta conditionally and marginally", Origin::ClosedForm, "simple-collapsible",
               1e-6)};
    s.grid = {{0.5, 1.0, 2.0}, {}, {0.5, 1.0, 2.0}};
    s.conditional_model = [](const Params& p) { return models::poisson_gamma(p.at("alpha"), p.at("beta")); };
    s.runner = body(run_poisson_gamma);
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "nb_regression";
    s.description = "Y|x,w ~ Poi(lambda(x) w), W ~ G(theta,theta) independent of X: the NB regression model";
    s.parameters = {{"theta", 2.0}, {"alpha", 0.1}, {"beta", 0.3}};
    s.closed_forms = {form("marginal_pmf", "y,x", "NB(y; size theta, prob theta/(theta+exp(alpha+beta*x)))",
                           [](double x, double y) { return nb_regression_pmf(y, x, 2.0, 0.1, 0.3); }),
                      form("variance", "x", "lambda*(1+lambda/theta)", [](double x, double) {
                        const double l = models::log_linear_rate(0.1, 0.3, x);
                        return l * (1.0 + l / 2.0);
                      })};
    s.expected = {
        expect("nb_pmf", "mixture pmf equals the NB closed form for x in {1,2}, y = 0..50", Origin::ClosedForm,
               "NB(theta, theta/(theta+lambda))", 1e-8),
        expect("variance_identity", "Var(Y|x) = lambda(1+lambda/theta) and exceeds the mean", Origin::ClosedForm,
               "lambda*(1+lambda/theta)", 1e-6),
        expect("led_simple", "LED equals beta", Origin::ClosedForm, "simple-collapsible", 1e-6),
        expect("x_independent_of_w", "X independent of W probe passes", Origin::ClosedForm, "pass", 0.0)};
    s.grid = {{0.5, 1.0, 2.0}, {}, {0.5, 1.0, 2.0}};
    s.conditional_model = [](const Params& p) {
      return models::nb_regression(p.at("theta"), p.at("alpha"), p.at("beta"));
    };
    s.runner = body(run_nb_regression);
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "product_mean";
    s.description = "E(Y|x,w) = x w, W|x ~ N(x,1): a negative control with marginal EDF 2x";
    s.closed_forms = {form("gap", "x", "x", [](double x, double) { return x; }),
                      form("edf_residual", "x", "x", [](double x, double) { return x; })};
    s.expected = {
        expect("edf_average", "not collapsible, gap x", Origin::ClosedForm, "not-collapsible", 1e-5),
        expect("decomposition", "marginal = conditional average + residual", Origin::Identity,
               "within summed error estimates", 0.0),
        expect("residual_closed_form", "residual equals x", Origin::ClosedForm, "x", 1e-6)};
    s.grid = {x4, {}, {}};
    s.conditional_model = [](const Params&) { return models::product_mean(); };
    s.runner = body(run_product_mean);
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "cochran_reversal";
    s.description = "Y = x - w + e, W = 2x + e': conditional slope +1, marginal slope -1";
    s.stochastic = true;
    s.closed_forms = {form("conditional_edf", "x", "1", [](double, double) { return 1.0; }),
                      form("marginal_edf", "x", "-1", [](double, double) { return -1.0; })};
    s.expected = {
        expect("reversal", "conditional EDF positive in every stratum, marginal negative", Origin::ClosedForm,
               "reversal", 0.0),
        expect("edf_average", "not collapsible, gap 2", Origin::ClosedForm, "not-collapsible", 1e-5),
        expect("ols_slopes", "OLS slopes within 3 SE of -1 (marginal) and +1 (conditional), n = 1e5, 5 seeds",
               Origin::ClosedForm, "-1 / +1", 3.0)};
    s.grid = {{-1.0, 0.0, 1.0}, {}, {-2.0, 0.0, 2.0}};
    s.conditional_model = [](const Params&) { return models::cochran_reversal(); };
    s.runner = body(run_cochran);
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "xwy_chain";
    s.description = "joint phi(y) phi(x-y) phi(w-y): X independent of W given Y, so MDI is average collapsible";
    s.closed_forms = {form("mdi", "y,x", "1", [](double, double) { return 1.0; })};
    s.expected = {
        expect("x_independent_of_w_given_y", "probe passes with deviation below 1e-4", Origin::ClosedForm, "pass",
               1e-4),
        expect("mdi_average", "MDI average collapsible on a 3x3 grid, both sides 1", Origin::ClosedForm,
               "average-collapsible", 1e-4)};
    s.grid = {{-0.5, 0.0, 0.5}, {-0.5, 0.0, 0.5}, {-0.5, 0.0, 0.5}};
    s.conditional_model = [](const Params&) { return models::xwy_chain(); };
    s.runner = body(run_xwy_chain);
    out.push_back(std::move(s));
  }
  for (bool broken : {false, true}) {
    Scenario s;
    s.name = broken ? "bivariate_w_broken" : "bivariate_w";
    s.kind = ModelKind::Bivariate;
    s.description = broken ? "W = (W1, W2) with W2|x ~ N(x,1): X and W2 dependent, EDF not collapsible"
                           : "W = (W1, W2), Y|x,w ~ N(x+w2,1), W1|x ~ N(x,1), W2 ~ N(0,1): EDF collapsible";
    s.closed_forms = {form("conditional_edf", "x", "1", [](double, double) { return 1.0; }),
                      form("marginal_edf", "x", broken ? "2" : "1",
                           [broken](double, double) { return broken ? 2.0 : 1.0; })};
    s.expected = {
        expect("edf_average", broken ? "not collapsible, gap 1" : "EDF is 1 on both sides", Origin::ClosedForm,
               broken ? "not-collapsible" : "average-collapsible", broken ? 1e-4 : 1e-5),
        expect("probes", broken ? "X independent of W2 fails" : "Y independent of W1 given (X,W2) and X independent of W2 pass",
               Origin::ClosedForm, broken ? "fail" : "pass", 0.0)};
    s.grid = {{0.5, 1.0, 2.0}, {-0.5, 1.0}, {}};
    s.bivariate_model = [broken] { return split_model(broken ? 1.0 : 0.0, broken ? "bivariate_w_broken" : "bivariate_w"); };
    s.runner = body([broken](Context& c) { run_bivariate(c, broken); });
    out.push_back(std::move(s));
  }
  return out;
}

template <class Fn>
std::function<std::vector<CheckRecord>(const Scenario&, const RunOptions&)> body(Fn fn) {
  return [fn](const Scenario& s, const RunOptions& o) {
    Context c{s, o, s.parameters, EvalConfig{}, with_overrides(s.grid, o), CheckOptions{}, {}};
    for (const auto& [k, v] : o.parameters) {
      require(s.parameters.count(k) == 1, ErrorKind::InvalidParams, s.name + " has no parameter '" + k + "'");
      c.params[k] = v;
    }
    if (o.quadrature) c.cfg.quadrature.method = *o.quadrature;
    c.check_options.threads = o.threads;
    fn(c);
    return std::move(c.records);
  };
}

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

CheckRecord::CheckRecord() : observed(kNaN), reference(kNaN), gap(kNaN), tolerance(kNaN) {}

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::ClosedForm: return "closed_form";
    case Origin::Oracle: return "oracle";
    case Origin::Identity: return "identity";
  }
  return "unknown";
}

std::string_view to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::Indeterminate: return "indeterminate";
    case CheckStatus::Reported: return "reported";
  }
  return "unknown";
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Conditional: return "conditional";
    case ModelKind::Bivariate: return "bivariate";
    case ModelKind::Regression: return "regression";
  }
  return "unknown";
}

CheckStatus ScenarioReport::overall() const {
  bool indeterminate = false;
  for (const auto& c : checks) {
    if (c.status == CheckStatus::Fail) return CheckStatus::Fail;
    indeterminate = indeterminate || c.status == CheckStatus::Indeterminate;
  }
  return indeterminate ? CheckStatus::Indeterminate : CheckStatus::Pass;
}

const ClosedForm& Scenario::closed_form(std::string_view wanted) const {
  for (const auto& f : closed_forms) {
    if (f.name == wanted) return f;
  }
  throw Error(ErrorKind::InvalidParams, name + " has no closed form '" + std::string(wanted) + "'");
}

const std::vector<Scenario>& catalog() {
  static const std::vector<Scenario> scenarios = build_catalog();
  return scenarios;
}

const Scenario& find_scenario(std::string_view name) {
  for (const auto& s : catalog()) {
    if (s.name == name) return s;
  }
  throw Error(ErrorKind::UnknownScenario, "unknown scenario '" + std::string(name) + "'");
}

ScenarioReport run_scenario(std::string_view name, const RunOptions& options) {
  const Scenario& s = find_scenario(name);
  ScenarioReport report;
  report.scenario = s.name;
  report.seed = options.seed;
  report.parameters = s.parameters;
  for (const auto& [k, v] : options.parameters) report.parameters[k] = v;

  auto records = s.runner(s, options);
  for (const auto& e : s.expected) {
    auto it = std::find_if(records.begin(), records.end(), [&](const CheckRecord& r) { return r.name == e.name; });
    if (it == records.end()) throw Error(ErrorKind::InvalidParams, s.name + ": check " + e.name + " did not run");
    CheckRecord r = std::move(*it);
    records.erase(it);
    r.description = e.description;
    r.origin = e.origin;
    r.expected = e.expected;
    if (e.informational) r.status = CheckStatus::Reported;
    report.checks.push_back(std::move(r));
  }
  if (!records.empty()) throw Error(ErrorKind::InvalidParams, s.name + ": unexpected check " + records.front().name);
  return report;
}

std::string catalog_fingerprint() {
  std::ostringstream out;
  for (const auto& s : catalog()) {
    out << "scenario " << s.name << " | " << to_string(s.kind) << " | " << (s.stochastic ? "stochastic" : "exact")
        << " | " << s.description << '\n';
    for (const auto& [k, v] : s.parameters) out << "  parameter " << k << " = " << number(v) << '\n';
    for (const auto& f : s.closed_forms) out << "  closed_form " << f.name << "(" << f.arguments << ") = " << f.formula << '\n';
    for (const auto& e : s.expected) {
      out << "  expect " << e.name << " | " << to_string(e.origin) << " | " << e.expected << " | "
          << number(e.tolerance) << (e.informational ? " | informational" : "") << '\n';
    }
  }
  return out.str();
}

std::uint64_t catalog_checksum() {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : catalog_fingerprint()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace collapse
