#include "collapse/measures.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "collapse/errors.hpp"
#include "collapse/kernels.hpp"
#include "detail.hpp"

namespace collapse {
namespace {

using detail::require;

constexpr double kMeanFloor = 1e-8;
constexpr double kProbabilityFloor = 1e-12;

std::string where(double x, std::optional<double> w) {
  std::string s = "x=" + std::to_string(x);
  if (w) s += ", w=" + std::to_string(*w);
  return s;
}

// d/dx of g at x, honouring the model's x-domain and retrying with smaller
// steps when a stencil node lands where g cannot be evaluated.
EstimatedReal d_dx(const ConditionalModel& model, const RealFunction& g, double x,
                   const EvalConfig& cfg) {
  return detail::with_shrinking_steps([&](double scale) {
    const double h = detail::local_step(x, model.x_domain, cfg.diff.base_step) * scale;
    return differentiate(g, x, detail::spec_for_step(cfg.diff, x, h), model.x_domain);
  });
}

}  // namespace

std::string_view to_string(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::EDF: return "edf";
    case MeasureKind::MDI: return "mdi";
    case MeasureKind::LED: return "led";
    case MeasureKind::DDF: return "ddf";
    case MeasureKind::MDIBinary: return "mdi-binary";
  }
  return "unknown";
}

MeasureKind measure_from_string(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (MeasureKind k : {MeasureKind::EDF, MeasureKind::MDI, MeasureKind::LED, MeasureKind::DDF,
                        MeasureKind::MDIBinary}) {
    if (lower == to_string(k)) return k;
  }
  throw Error(ErrorKind::InvalidParams, "unknown measure '" + std::string(text) + "'");
}

bool needs_y(MeasureKind kind) { return kind == MeasureKind::MDI || kind == MeasureKind::DDF; }

EstimatedReal edf(const ConditionalModel& model, double x, std::optional<double> w,
                  const EvalConfig& cfg) {
  require(model.has_mean() || model.has_density(), ErrorKind::MissingCapability,
          model.name + ": EDF needs a conditional mean or density");
  auto mean = [&](double s) {
    return w ? conditional_mean(model, s, *w, cfg).value : marginal_mean(model, s, cfg).value;
  };
  return d_dx(model, mean, x, cfg);
}

EstimatedReal mdi(const ConditionalModel& model, double y, double x, std::optional<double> w,
                  const EvalConfig& cfg) {
  require(model.y_kind == YKind::Continuous, ErrorKind::InvalidParams,
          model.name + ": MDI needs continuous Y; use mdi-binary for binary Y");
  require(model.has_density(), ErrorKind::MissingCapability,
          model.name + ": MDI needs a conditional density");
  BivariateFunction density;
  if (w) {
    density = [&](double s, double t) {
      return model.y_in_support(t, s, *w) ? model.density_yxw(t, s, *w) : 0.0;
    };
  } else {
    density = [&](double s, double t) { return marginal_density(model, t, s, cfg).value; };
  }
  const Interval y_room = w ? model.y_bounds(x, *w) : model.marginal_y_bounds(x);
  const double base = std::pow(cfg.diff.base_step, 0.75);
  return detail::with_shrinking_steps([&](double scale) {
    const StencilSteps steps{detail::local_step(x, model.x_domain, base) * scale,
                             detail::local_step(y, y_room, base) * scale};
    return mixed_partial(density, x, y, cfg.diff, steps);
  });
}

EstimatedReal led(const ConditionalModel& model, double x, std::optional<double> w,
                  const EvalConfig& cfg) {
  require(model.has_mean() || model.has_density(), ErrorKind::MissingCapability,
          model.name + ": LED needs a conditional mean or density");
  auto log_mean = [&](double s) {
    const auto est = w ? conditional_mean(model, s, *w, cfg) : marginal_mean(model, s, cfg);
    const double m = est.value;
    // an exact mean only has to be positive; a quadrature one must clear its noise
    const double floor = est.err_estimate == 0.0 ? std::numeric_limits<double>::min() : kMeanFloor;
    if (!(m >= floor)) {
      throw Error(ErrorKind::NonPositiveMean,
                  model.name + ": mean " + std::to_string(m) + " at " + where(s, w));
    }
    return std::log(m);
  };
  return d_dx(model, log_mean, x, cfg);
}

EstimatedReal ddf(const ConditionalModel& model, double y, double x, std::optional<double> w,
                  const EvalConfig& cfg) {
  require(model.has_cdf() || model.has_density(), ErrorKind::MissingCapability,
          model.name + ": DDF needs a conditional cdf or density");
  auto cdf_at = [&](double s) {
    return w ? conditional_cdf(model, y, s, *w, cfg).value : marginal_cdf(model, y, s, cfg).value;
  };
  return d_dx(model, cdf_at, x, cfg);
}

EstimatedReal mdi_binary(const ConditionalModel& model, double x, std::optional<double> w,
                         const EvalConfig& cfg) {
  require(model.y_kind == YKind::Binary, ErrorKind::InvalidParams,
          model.name + ": mdi-binary needs binary Y");
  require(model.has_density(), ErrorKind::MissingCapability,
          model.name + ": mdi-binary needs P(Y=1|x,w)");
  auto log_odds = [&](double s) {
    const double p = w ? model.density_yxw(1.0, s, *w) : marginal_pmf(model, 1, s, cfg).value;
    if (!(p > kProbabilityFloor && p < 1.0 - kProbabilityFloor)) {
      throw Error(ErrorKind::DegenerateProbability,
                  model.name + ": P(Y=1) = " + std::to_string(p) + " at " + where(s, w));
    }
    return std::log(p) - std::log1p(-p);
  };
  return d_dx(model, log_odds, x, cfg);
}

EstimatedReal evaluate_measure(MeasureKind kind, const ConditionalModel& model,
                               const MeasurePoint& point, const EvalConfig& cfg) {
  if (needs_y(kind) && !point.y) {
    throw Error(ErrorKind::InvalidParams, std::string(to_string(kind)) + " needs a y value");
  }
  switch (kind) {
    case MeasureKind::EDF: return edf(model, point.x, point.w, cfg);
    case MeasureKind::MDI: return mdi(model, *point.y, point.x, point.w, cfg);
    case MeasureKind::LED: return led(model, point.x, point.w, cfg);
    case MeasureKind::DDF: return ddf(model, *point.y, point.x, point.w, cfg);
    case MeasureKind::MDIBinary: return mdi_binary(model, point.x, point.w, cfg);
  }
  throw Error(ErrorKind::InvalidParams, "unknown measure");
}

CorrelationEstimate correlation_mc(const ConditionalModel& model, const Family& x_law, long n,
                                   Seed seed) {
  require(model.has_sampler() && static_cast<bool>(model.covariate.sampler),
          ErrorKind::MissingCapability, model.name + ": correlation needs W and Y samplers");
  require(n >= 3, ErrorKind::InvalidParams, "correlation needs at least 3 draws");
  x_law.validate();

  Rng rng(seed.value);
  std::vector<double> xs(static_cast<std::size_t>(n));
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = draw(x_law, rng);
    const double w = model.covariate.sampler(xs[i], rng);
    ys[i] = model.sampler_yxw(xs[i], w, rng);
  }

  const double count = static_cast<double>(n);
  const double mx = kernels::sum(xs) / count;
  const double my = kernels::sum(ys) / count;
  const double sx = std::sqrt(kernels::sum_sq_dev(xs, mx) / count);
  const double sy = std::sqrt(kernels::sum_sq_dev(ys, my) / count);
  require(sx > 0.0 && sy > 0.0, ErrorKind::DegenerateProbability,
          model.name + ": a sampled variable is constant");

  // standardize in place, then rho = mean(zx*zy)
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = (xs[i] - mx) / sx;
    ys[i] = (ys[i] - my) / sy;
  }
  const double rho = kernels::dot(xs, ys) / count;

  // influence function of Pearson's rho: zx zy - rho (zx^2 + zy^2) / 2
  std::vector<double> influence(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    influence[i] = xs[i] * ys[i] - 0.5 * rho * (xs[i] * xs[i] + ys[i] * ys[i]);
  }
  const double mean_if = kernels::sum(influence) / count;
  const double se = std::sqrt(kernels::sum_sq_dev(influence, mean_if) / (count - 1.0) / count);
  return {rho, se, rho - 3.0 * se, rho + 3.0 * se, n};
}

}  // namespace collapse
