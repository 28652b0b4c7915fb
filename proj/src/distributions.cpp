#include "collapse/distributions.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>

#include "collapse/errors.hpp"

namespace collapse {
namespace {

[[noreturn]] void invalid(const Family& f, const std::string& why) {
  throw Error(ErrorKind::InvalidParams, std::string(to_string(f.tag)) + ": " + why);
}

bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

double log_normal_density(double z, double sd) {
  return -0.5 * z * z / (sd * sd) - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace

std::string_view to_string(FamilyTag tag) {
  switch (tag) {
    case FamilyTag::Normal: return "normal";
    case FamilyTag::Uniform: return "uniform";
    case FamilyTag::Gamma: return "gamma";
    case FamilyTag::Poisson: return "poisson";
    case FamilyTag::NegativeBinomial: return "negative-binomial";
    case FamilyTag::Bernoulli: return "bernoulli";
    case FamilyTag::TemperedNormal: return "tempered-normal";
  }
  return "unknown";
}

FamilyTag family_from_string(std::string_view name) {
  for (FamilyTag tag : {FamilyTag::Normal, FamilyTag::Uniform, FamilyTag::Gamma, FamilyTag::Poisson,
                        FamilyTag::NegativeBinomial, FamilyTag::Bernoulli,
                        FamilyTag::TemperedNormal}) {
    if (name == to_string(tag)) return tag;
  }
  throw Error(ErrorKind::InvalidParams, "unknown distribution family '" + std::string(name) + "'");
}

std::size_t arity(FamilyTag tag) {
  switch (tag) {
    case FamilyTag::Poisson:
    case FamilyTag::Bernoulli:
      return 1;
    default:
      return 2;
  }
}

void Family::validate() const {
  if (params.size() != arity(tag)) {
    invalid(*this, "expected " + std::to_string(arity(tag)) + " parameters, got " +
                       std::to_string(params.size()));
  }
  for (double p : params) {
    if (!std::isfinite(p)) invalid(*this, "parameters must be finite");
  }
  switch (tag) {
    case FamilyTag::Normal:
      if (!(params[1] > 0.0)) invalid(*this, "sd must be positive");
      break;
    case FamilyTag::Uniform:
      if (!(params[0] < params[1])) invalid(*this, "requires lo < hi");
      break;
    case FamilyTag::Gamma:
      if (!(params[0] > 0.0) || !(params[1] > 0.0)) invalid(*this, "rate and shape must be positive");
      break;
    case FamilyTag::Poisson:
      if (!(params[0] > 0.0)) invalid(*this, "mean must be positive");
      break;
    case FamilyTag::NegativeBinomial:
      if (!(params[0] > 0.0)) invalid(*this, "size must be positive");
      if (!(params[1] > 0.0 && params[1] < 1.0)) invalid(*this, "prob must lie in (0,1)");
      break;
    case FamilyTag::Bernoulli:
      if (!(params[0] >= 0.0 && params[0] <= 1.0)) invalid(*this, "p must lie in [0,1]");
      break;
    case FamilyTag::TemperedNormal:
      if (!(params[1] > 0.0)) invalid(*this, "lambda must be positive");
      break;
  }
}

bool Family::is_discrete() const {
  return tag == FamilyTag::Poisson || tag == FamilyTag::NegativeBinomial ||
         tag == FamilyTag::Bernoulli;
}

Interval Family::support() const {
  switch (tag) {
    case FamilyTag::Uniform: return {params[0], params[1]};
    case FamilyTag::Gamma: return Interval::positive();
    case FamilyTag::Poisson:
    case FamilyTag::NegativeBinomial: return {0.0, kInf};
    case FamilyTag::Bernoulli: return {0.0, 1.0};
    default: return Interval::real_line();
  }
}

double Family::mean() const {
  validate();
  switch (tag) {
    case FamilyTag::Normal: return params[0];
    case FamilyTag::Uniform: return 0.5 * (params[0] + params[1]);
    case FamilyTag::Gamma: return params[1] / params[0];
    case FamilyTag::Poisson: return params[0];
    case FamilyTag::NegativeBinomial: return params[0] * (1.0 - params[1]) / params[1];
    case FamilyTag::Bernoulli: return params[0];
    case FamilyTag::TemperedNormal: return params[0] - params[1];
  }
  return 0.0;
}

double Family::variance() const {
  validate();
  switch (tag) {
    case FamilyTag::Normal: return params[1] * params[1];
    case FamilyTag::Uniform: {
      const double w = params[1] - params[0];
      return w * w / 12.0;
    }
    case FamilyTag::Gamma: return params[1] / (params[0] * params[0]);
    case FamilyTag::Poisson: return params[0];
    case FamilyTag::NegativeBinomial:
      return params[0] * (1.0 - params[1]) / (params[1] * params[1]);
    case FamilyTag::Bernoulli: return params[0] * (1.0 - params[0]);
    case FamilyTag::TemperedNormal: return 1.0;
  }
  return 0.0;
}

double log_pdf_or_pmf(const Family& f, double point) {
  f.validate();
  const double ninf = -kInf;
  const auto& p = f.params;
  switch (f.tag) {
    case FamilyTag::Normal:
      return log_normal_density(point - p[0], p[1]);
    case FamilyTag::TemperedNormal:
      return log_normal_density(point - p[0] + p[1], 1.0);
    case FamilyTag::Uniform:
      return (point >= p[0] && point <= p[1]) ? -std::log(p[1] - p[0]) : ninf;
    case FamilyTag::Gamma:
      if (!(point > 0.0)) return ninf;
      return p[1] * std::log(p[0]) + (p[1] - 1.0) * std::log(point) - p[0] * point -
             std::lgamma(p[1]);
    case FamilyTag::Poisson:
      if (!(point >= 0.0) || !is_integer(point)) return ninf;
      return point * std::log(p[0]) - p[0] - std::lgamma(point + 1.0);
    case FamilyTag::NegativeBinomial:
      if (!(point >= 0.0) || !is_integer(point)) return ninf;
      return std::lgamma(point + p[0]) - std::lgamma(point + 1.0) - std::lgamma(p[0]) +
             p[0] * std::log(p[1]) + point * std::log1p(-p[1]);
    case FamilyTag::Bernoulli:
      if (point == 1.0) return std::log(p[0]);
      if (point == 0.0) return std::log1p(-p[0]);
      return ninf;
  }
  return ninf;
}

double pdf_or_pmf(const Family& f, double point) {
  f.validate();
  if (f.tag == FamilyTag::Bernoulli) {
    if (point == 1.0) return f.params[0];
    if (point == 0.0) return 1.0 - f.params[0];
    return 0.0;
  }
  return std::exp(log_pdf_or_pmf(f, point));
}

double cdf(const Family& f, double point) {
  f.validate();
  const auto& p = f.params;
  if (std::isnan(point)) throw Error(ErrorKind::InvalidParams, "cdf at NaN");
  switch (f.tag) {
    case FamilyTag::Normal:
      return normal_cdf((point - p[0]) / p[1]);
    case FamilyTag::TemperedNormal:
      return normal_cdf(point - p[0] + p[1]);
    case FamilyTag::Uniform:
      if (point <= p[0]) return 0.0;
      if (point >= p[1]) return 1.0;
      return (point - p[0]) / (p[1] - p[0]);
    case FamilyTag::Gamma:
      if (!(point > 0.0)) return 0.0;
      if (std::isinf(point)) return 1.0;
      return boost::math::gamma_p(p[1], p[0] * point);
    case FamilyTag::Poisson: {
      if (point < 0.0) return 0.0;
      if (std::isinf(point)) return 1.0;
      const double k = std::floor(point);
      return boost::math::gamma_q(k + 1.0, p[0]);
    }
    case FamilyTag::NegativeBinomial: {
      if (point < 0.0) return 0.0;
      if (std::isinf(point)) return 1.0;
      const double k = std::floor(point);
      return boost::math::ibeta(p[0], k + 1.0, p[1]);
    }
    case FamilyTag::Bernoulli:
      if (point < 0.0) return 0.0;
      if (point < 1.0) return 1.0 - p[0];
      return 1.0;
  }
  return 0.0;
}

double draw(const Family& f, Rng& rng) {
  f.validate();
  const auto& p = f.params;
  switch (f.tag) {
    case FamilyTag::Normal:
      return std::normal_distribution<double>(p[0], p[1])(rng);
    case FamilyTag::TemperedNormal:
      return std::normal_distribution<double>(p[0] - p[1], 1.0)(rng);
    case FamilyTag::Uniform:
      return std::uniform_real_distribution<double>(p[0], p[1])(rng);
    case FamilyTag::Gamma:
      return std::gamma_distribution<double>(p[1], 1.0 / p[0])(rng);
    case FamilyTag::Poisson:
      return static_cast<double>(std::poisson_distribution<long long>(p[0])(rng));
    case FamilyTag::NegativeBinomial: {
      const double rate = std::gamma_distribution<double>(p[0], (1.0 - p[1]) / p[1])(rng);
      if (rate <= 0.0) return 0.0;
      return static_cast<double>(std::poisson_distribution<long long>(rate)(rng));
    }
    case FamilyTag::Bernoulli:
      return std::bernoulli_distribution(p[0])(rng) ? 1.0 : 0.0;
  }
  return 0.0;
}

std::vector<double> sample(const Family& family, std::size_t n, Seed seed) {
  family.validate();
  if (n < 1) throw Error(ErrorKind::InvalidParams, "sample size must be >= 1");
  Rng rng(seed.value);
  std::vector<double> out(n);
  for (auto& v : out) v = draw(family, rng);
  return out;
}

}  // namespace collapse
