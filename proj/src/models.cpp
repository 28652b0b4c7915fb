#include "collapse/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "collapse/errors.hpp"

namespace collapse::models {
namespace {

double std_normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

CovariateLaw normal_around(double shift, double scale) {
  return CovariateLaw::normal([shift, scale](double x) { return scale * x + shift; },
                              [](double) { return 1.0; });
}

// x^2 + (w-x)^2, the scale shared by the uniform and power-density examples.
double spread(double x, double w) { return x * x + (w - x) * (w - x); }

}  // namespace

double log_linear_rate(double alpha, double beta, double x) { return std::exp(alpha + beta * x); }

ConditionalModel uniform_normal() {
  ConditionalModel m;
  m.name = "uniform_normal";
  m.covariate = normal_around(0.0, 1.0);
  m.set_y_family([](double x, double w) { return Family::uniform(0.0, spread(x, w)); });
  m.y_support.w_breakpoints = [](double y, double x) -> std::vector<double> {
    const double gap = y - x * x;
    if (gap <= 0.0) return {};
    return {x - std::sqrt(gap), x + std::sqrt(gap)};
  };
  m.marginal_y_support = [](double) { return Interval::positive(); };
  return m;
}

ConditionalModel homogeneous_uniform() {
  ConditionalModel m;
  m.name = "homogeneous_uniform";
  m.x_domain = {-1.0, kInf};
  m.covariate = CovariateLaw::from_family([](double x) { return Family::gamma(1.0, 1.0 + x); });
  // written out by hand: U(x-w, x+w) collapses as w -> 0, where a Family
  // would refuse to be built
  m.mean_yxw = [](double x, double) { return x; };
  m.density_yxw = [](double y, double x, double w) {
    return std::abs(y - x) < w ? 0.5 / w : 0.0;
  };
  m.cdf_yxw = [](double y, double x, double w) {
    return std::clamp((y - x + w) / (2.0 * w), 0.0, 1.0);
  };
  m.sampler_yxw = [](double x, double w, Rng& rng) {
    return std::uniform_real_distribution<double>(x - w, x + w)(rng);
  };
  m.y_support.bounds = [](double x, double w) { return Interval{x - w, x + w}; };
  m.y_support.parametric = true;
  m.y_support.w_breakpoints = [](double y, double x) -> std::vector<double> {
    return {std::abs(y - x)};
  };
  m.marginal_y_support = [](double) { return Interval::real_line(); };
  return m;
}

ConditionalModel homogeneous_gamma() {
  ConditionalModel m;
  m.name = "homogeneous_gamma";
  m.x_domain = Interval::positive();
  m.covariate = CovariateLaw::from_family([](double x) { return Family::gamma(x, 1.0); });
  m.set_y_family([](double x, double w) { return Family::gamma(w, w * x); });
  m.y_support.parametric = false;
  return m;
}

ConditionalModel power_density(double lambda) {
  if (!std::isfinite(lambda)) throw Error(ErrorKind::InvalidParams, "tempering lambda must be finite");
  ConditionalModel m;
  m.name = lambda == 0.0 ? "power_density" : "power_density_tempered";
  m.x_domain = Interval::positive();
  m.covariate = normal_around(-lambda, 1.0);
  auto upper = [](double x, double w) { return std::pow(spread(x, w), -1.0 / x); };
  m.density_yxw = [upper](double y, double x, double w) {
    if (!(y > 0.0 && y < upper(x, w))) return 0.0;
    return x * std::pow(y, x - 1.0) * spread(x, w);
  };
  m.cdf_yxw = [upper](double y, double x, double w) {
    if (y <= 0.0) return 0.0;
    if (y >= upper(x, w)) return 1.0;
    return std::pow(y, x) * spread(x, w);
  };
  m.mean_yxw = [upper](double x, double w) { return x / (x + 1.0) * upper(x, w); };
  m.sampler_yxw = [](double x, double w, Rng& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return std::pow(u / spread(x, w), 1.0 / x);
  };
  m.y_support.bounds = [upper](double x, double w) { return Interval{0.0, upper(x, w)}; };
  m.y_support.parametric = true;
  m.y_support.w_breakpoints = [](double y, double x) -> std::vector<double> {
    if (y <= 0.0) return {};
    const double t2 = std::pow(y, -x) - x * x;
    if (t2 <= 0.0) return {};
    return {x - std::sqrt(t2), x + std::sqrt(t2)};
  };
  m.marginal_y_support = [](double x) { return Interval{0.0, std::pow(x, -2.0 / x)}; };
  return m;
}

ConditionalModel poisson_gamma(double alpha, double beta) {
  ConditionalModel m;
  m.name = "poisson_gamma";
  m.y_kind = YKind::Count;
  m.x_domain = Interval::positive();
  m.covariate = CovariateLaw::from_family([](double x) { return Family::gamma(x, x); });
  m.set_y_family([alpha, beta](double x, double w) {
    return Family::poisson(log_linear_rate(alpha, beta, x) * w);
  });
  m.y_support.parametric = false;
  return m;
}

ConditionalModel nb_regression(double theta, double alpha, double beta) {
  if (!(theta > 0.0)) throw Error(ErrorKind::InvalidParams, "theta must be positive");
  ConditionalModel m;
  m.name = "nb_regression";
  m.y_kind = YKind::Count;
  m.covariate = CovariateLaw::from_family([theta](double) { return Family::gamma(theta, theta); });
  m.set_y_family([alpha, beta](double x, double w) {
    return Family::poisson(log_linear_rate(alpha, beta, x) * w);
  });
  m.y_support.parametric = false;
  return m;
}

ConditionalModel product_mean() {
  ConditionalModel m;
  m.name = "product_mean";
  m.covariate = normal_around(0.0, 1.0);
  m.set_y_family([](double x, double w) { return Family::normal(x * w, 1.0); });
  m.y_support.parametric = false;
  return m;
}

ConditionalModel cochran_reversal() {
  ConditionalModel m = linear_gaussian(0.0, 1.0, -1.0);
  m.name = "cochran_reversal";
  m.covariate = normal_around(0.0, 2.0);
  return m;
}

ConditionalModel xwy_chain() {
  JointDensitySpec spec;
  spec.density = [](double x, double y, double w) {
    return std_normal_pdf(y) * std_normal_pdf(x - y) * std_normal_pdf(w - y);
  };
  return condition_from_joint(spec, "xwy_chain");
}

ConditionalModel poisson_loglinear(double alpha, double beta, double gamma) {
  ConditionalModel m;
  m.name = "poisson_loglinear";
  m.y_kind = YKind::Count;
  m.covariate = normal_around(0.0, 1.0);
  m.set_y_family([=](double x, double w) {
    return Family::poisson(std::exp(alpha + beta * x + gamma * w));
  });
  m.y_support.parametric = false;
  return m;
}

ConditionalModel logistic(double alpha, double beta, double gamma) {
  ConditionalModel m;
  m.name = "logistic";
  m.y_kind = YKind::Binary;
  m.covariate = normal_around(0.0, 1.0);
  m.set_y_family([=](double x, double w) {
    return Family::bernoulli(expit(alpha + beta * x + gamma * w));
  });
  m.y_support.parametric = false;
  return m;
}

ConditionalModel linear_gaussian(double alpha, double beta, double gamma, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidParams, "sigma must be positive");
  ConditionalModel m;
  m.name = "linear_gaussian";
  m.covariate = normal_around(0.0, 1.0);
  m.set_y_family([=](double x, double w) {
    return Family::normal(alpha + beta * x + gamma * w, sigma);
  });
  m.y_support.parametric = false;
  return m;
}

}  // namespace collapse::models
