#include "collapse/regression.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "collapse/errors.hpp"
#include "collapse/kernels.hpp"
#include "detail.hpp"

namespace collapse {
namespace {

using detail::require;
using Columns = std::vector<std::vector<double>>;

constexpr std::size_t kMinStratum = 50;
constexpr double kBand = 3.0;
// |eta| beyond this with a near-perfect fit is read as separation
constexpr double kSeparatedEta = 30.0;

Columns design(const Dataset& data, bool include_w) {
  Columns cols;
  cols.emplace_back(data.size(), 1.0);
  cols.push_back(data.x);
  if (include_w) cols.push_back(data.w);
  return cols;
}

Eigen::MatrixXd weighted_gram(const Columns& cols, std::span<const double> weight) {
  const auto p = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd g(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = 0; k <= j; ++k) {
      g(j, k) = g(k, j) = kernels::dot3(cols[j], weight, cols[k]);
    }
  }
  return g;
}

Eigen::VectorXd cross(const Columns& cols, std::span<const double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out(static_cast<Eigen::Index>(j)) = kernels::dot(cols[j], v);
  return out;
}

// Rank check on the correlation-scaled Gram matrix.
void require_full_rank(const Eigen::MatrixXd& gram) {
  const Eigen::VectorXd d = gram.diagonal().cwiseSqrt();
  require((d.array() > 0.0).all(), ErrorKind::RankDeficient, "a design column is identically zero");
  const Eigen::MatrixXd scaled = d.asDiagonal().inverse() * gram * d.asDiagonal().inverse();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled, Eigen::EigenvaluesOnly);
  require(eig.eigenvalues().minCoeff() > 1e-10, ErrorKind::RankDeficient,
          "design matrix is rank deficient");
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<double> standard_errors(const Eigen::MatrixXd& information, double scale) {
  const Eigen::MatrixXd cov = information.inverse() * scale;
  std::vector<double> se(static_cast<std::size_t>(cov.rows()));
  for (Eigen::Index j = 0; j < cov.rows(); ++j) se[static_cast<std::size_t>(j)] = std::sqrt(cov(j, j));
  return se;
}

double sigmoid(double eta) {
  return eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

// log(1 + e^eta) without overflow
double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

// Per-row quantities of a log- or logit-link family at the linear predictor.
struct GlmFamily {
  RegressionFamily family;
  double theta;  // NB only

  double mean(double eta) const { return family == RegressionFamily::Logistic ? sigmoid(eta) : std::exp(eta); }
  // Fisher weight and score contribution per unit of the linear predictor
  double weight(double mu) const {
    switch (family) {
      case RegressionFamily::Logistic: return mu * (1.0 - mu);
      case RegressionFamily::NegBin: return mu / (1.0 + mu / theta);
      default: return mu;
    }
  }
  double score(double y, double mu) const {
    return family == RegressionFamily::NegBin ? (y - mu) / (1.0 + mu / theta) : y - mu;
  }
  double log_likelihood(double y, double eta) const {
    switch (family) {
      case RegressionFamily::Logistic: return y * eta - softplus(eta);
      case RegressionFamily::NegBin: {
        const double mu = std::exp(eta);
        return std::lgamma(y + theta) - std::lgamma(theta) - std::lgamma(y + 1.0) +
               theta * std::log(theta / (theta + mu)) + y * (eta - std::log(theta + mu));
      }
      default: return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
    }
  }
};

struct IrlsState {
  std::vector<double> eta;
  std::vector<double> weight;
  std::vector<double> score;
  double log_likelihood = 0.0;
};

IrlsState evaluate(const GlmFamily& fam, const Dataset& data, const Columns& cols, const Eigen::VectorXd& b,
                   const std::vector<double>& offset) {
  const std::size_t n = data.size();
  IrlsState s;
  s.eta.assign(n, 0.0);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    kernels::axpy(b(static_cast<Eigen::Index>(j)), cols[j], s.eta);
  }
  if (!offset.empty()) kernels::axpy(1.0, offset, s.eta);
  s.weight.resize(n);
  s.score.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = fam.mean(s.eta[i]);
    s.weight[i] = fam.weight(mu);
    s.score[i] = fam.score(data.y[i], mu);
    s.log_likelihood += fam.log_likelihood(data.y[i], s.eta[i]);
  }
  return s;
}

FitResult irls(const Dataset& data, const GlmFamily& fam, bool include_w, const GlmOptions& options) {
  const std::size_t n = data.size();
  require(n >= 3, ErrorKind::InvalidParams, "a fit needs at least 3 records");
  require(options.offset.empty() || options.offset.size() == n, ErrorKind::InvalidParams,
          "offset length differs from the data");
  require(options.max_iterations >= 1 && options.score_tol > 0.0, ErrorKind::InvalidParams,
          "bad IRLS options");
  for (double y : data.y) {
    require(std::isfinite(y) && y >= 0.0, ErrorKind::InvalidParams, "responses must be nonnegative");
    if (fam.family == RegressionFamily::Logistic) {
      require(y == 0.0 || y == 1.0, ErrorKind::InvalidParams, "logistic responses must be 0 or 1");
    }
  }
  const Columns cols = design(data, include_w);
  require_full_rank(weighted_gram(cols, std::vector<double>(n, 1.0)));

  // start from the intercept-only solution
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cols.size()));
  const double ybar = kernels::sum(data.y) / static_cast<double>(n);
  const double mean_offset = options.offset.empty() ? 0.0 : kernels::sum(options.offset) / static_cast<double>(n);
  if (fam.family == RegressionFamily::Logistic) {
    const double p = std::clamp(ybar, 1e-6, 1.0 - 1e-6);
    b(0) = std::log(p / (1.0 - p));
  } else {
    b(0) = std::log(std::max(ybar, 1e-6)) - mean_offset;
  }

  const double tiny_step_score = 1e-6 * static_cast<double>(n);
  FitResult fit;
  IrlsState s = evaluate(fam, data, cols, b, options.offset);
  for (int it = 0;; ++it) {
    const Eigen::VectorXd g = cross(cols, s.score);
    const Eigen::MatrixXd info = weighted_gram(cols, s.weight);
    fit.score_norm = g.cwiseAbs().maxCoeff();
    fit.iterations = it;
    if (fit.score_norm < options.score_tol) {
      fit.converged = true;
    }

    const double max_eta = std::abs(*std::max_element(s.eta.begin(), s.eta.end(), [](double a, double c) {
      return std::abs(a) < std::abs(c);
    }));
    if (fam.family == RegressionFamily::Logistic && max_eta > kSeparatedEta &&
        s.log_likelihood > -1e-6 * static_cast<double>(n)) {
      throw Error(ErrorKind::Separation, "logistic fit diverges: the outcome is separated by the design");
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
      if (fam.family == RegressionFamily::Logistic && max_eta > kSeparatedEta) {
        throw Error(ErrorKind::Separation, "logistic information matrix collapsed");
      }
      throw Error(ErrorKind::NotConverged, "IRLS information matrix is singular");
    }
    if (fit.converged) {
      fit.coefficients = to_vector(b);
      fit.std_errors = standard_errors(info, 1.0);
      fit.log_likelihood = s.log_likelihood;
      return fit;
    }
    if (it >= options.max_iterations) break;

    const Eigen::VectorXd step = ldlt.solve(g);
    // step halving keeps the likelihood from decreasing
    double scale = 1.0;
    Eigen::VectorXd next = b + step;
    IrlsState trial = evaluate(fam, data, cols, next, options.offset);
    for (int h = 0; h < 40 && !(trial.log_likelihood >= s.log_likelihood - 1e-12 * std::abs(s.log_likelihood));
         ++h) {
      scale *= 0.5;
      next = b + scale * step;
      trial = evaluate(fam, data, cols, next, options.offset);
    }
    const double moved = (next - b).cwiseAbs().maxCoeff();
    b = next;
    s = std::move(trial);
    if (moved <= 1e-12 * (1.0 + b.cwiseAbs().maxCoeff()) &&
        cross(cols, s.score).cwiseAbs().maxCoeff() < tiny_step_score) {
      // no further progress is possible in floating point
      fit.converged = true;
      fit.score_norm = cross(cols, s.score).cwiseAbs().maxCoeff();
      fit.iterations = it + 1;
      fit.coefficients = to_vector(b);
      fit.std_errors = standard_errors(weighted_gram(cols, s.weight), 1.0);
      fit.log_likelihood = s.log_likelihood;
      return fit;
    }
    if (fam.family == RegressionFamily::Logistic && b.cwiseAbs().maxCoeff() > 1e4) {
      throw Error(ErrorKind::Separation, "logistic coefficients diverge");
    }
  }
  throw Error(ErrorKind::NotConverged, "IRLS did not converge in " + std::to_string(options.max_iterations) +
                                           " iterations (score " + std::to_string(fit.score_norm) + ")");
}

double draw_level(const DiscreteCovariate& cov, double x, Rng& rng) {
  const auto probs = cov.probabilities(x);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double t = u(rng);
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    if (t < probs[k]) return cov.levels[k];
    t -= probs[k];
  }
  return cov.levels.back();
}

Dataset subset(const Dataset& data, double level) {
  Dataset out;
  out.spec_name = data.spec_name;
  out.seed = data.seed;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.w[i] != level) continue;
    out.y.push_back(data.y[i]);
    out.x.push_back(data.x[i]);
    out.w.push_back(data.w[i]);
  }
  return out;
}

// Fit of y on (1, x) in the study's family, the marginal model.
FitResult fit_marginal(const RegressionSpec& spec, const Dataset& data) {
  switch (spec.family) {
    case RegressionFamily::Linear: return fit_linear(data, false);
    case RegressionFamily::NegBin: return fit_negbin(data, spec.theta);
    default: return fit_glm(data, spec.family, false);
  }
}

int strict_sign(double value, double se) {
  if (value > kBand * se) return 1;
  if (value < -kBand * se) return -1;
  return 0;
}

std::string trim(std::string s) {
  auto space = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), space));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), space).base(), s.end());
  return s;
}

}  // namespace

std::string_view to_string(RegressionFamily family) {
  switch (family) {
    case RegressionFamily::Linear: return "linear";
    case RegressionFamily::Logistic: return "logistic";
    case RegressionFamily::Poisson: return "poisson";
    case RegressionFamily::NegBin: return "negbin";
  }
  return "unknown";
}

RegressionFamily regression_family_from_string(std::string_view text) {
  for (auto f : {RegressionFamily::Linear, RegressionFamily::Logistic, RegressionFamily::Poisson,
                 RegressionFamily::NegBin}) {
    if (text == to_string(f)) return f;
  }
  throw Error(ErrorKind::InvalidParams, "unknown regression family '" + std::string(text) + "'");
}

void RegressionSpec::validate(std::span<const double> at_x) const {
  for (double v : {alpha, beta, gamma}) require(std::isfinite(v), ErrorKind::InvalidParams, name + ": coefficients must be finite");
  require(theta > 0.0 && std::isfinite(theta), ErrorKind::InvalidParams, name + ": theta must be positive");
  require(noise_sd > 0.0 && std::isfinite(noise_sd), ErrorKind::InvalidParams, name + ": noise sd must be positive");
  require(alpha_by_level.size() == beta_by_level.size(), ErrorKind::InvalidParams,
          name + ": stratum maps for alpha and beta differ in length");
  if (family == RegressionFamily::NegBin) return;
  if (const auto* d = std::get_if<DiscreteCovariate>(&covariate)) {
    require(!d->levels.empty() && static_cast<bool>(d->probabilities), ErrorKind::InvalidParams,
            name + ": a discrete covariate needs levels and probabilities");
    require(!stratified() || beta_by_level.size() == d->levels.size(), ErrorKind::InvalidParams,
            name + ": stratum maps must have one entry per level");
    for (double x : at_x) {
      const auto p = d->probabilities(x);
      require(p.size() == d->levels.size(), ErrorKind::InvalidParams, name + ": one probability per level");
      double total = 0.0;
      for (double q : p) {
        require(q >= 0.0, ErrorKind::InvalidParams, name + ": negative level probability");
        total += q;
      }
      require(std::abs(total - 1.0) <= 1e-9, ErrorKind::InvalidParams,
              name + ": level probabilities sum to " + std::to_string(total));
    }
  } else {
    require(!stratified(), ErrorKind::InvalidParams, name + ": stratum maps need a discrete covariate");
    require(static_cast<bool>(std::get<CovariateLaw>(covariate).sampler) ||
                std::get<CovariateLaw>(covariate).is_degenerate(),
            ErrorKind::InvalidParams, name + ": the covariate law needs a sampler");
  }
}

double RegressionSpec::linear_predictor(double x, double w) const {
  if (stratified()) {
    const auto& levels = std::get<DiscreteCovariate>(covariate).levels;
    const auto k = static_cast<std::size_t>(std::find(levels.begin(), levels.end(), w) - levels.begin());
    require(k < levels.size(), ErrorKind::InvalidParams, name + ": w is not a declared level");
    return alpha_by_level[k] + beta_by_level[k] * x;
  }
  return alpha + beta * x + gamma * w;
}

Dataset simulate(const RegressionSpec& spec, std::size_t n, const Family& x_law, Seed seed) {
  spec.validate();
  x_law.validate();
  require(n >= 1, ErrorKind::InvalidParams, "simulate needs n >= 1");
  Rng rng(seed.value);
  Dataset data;
  data.spec_name = spec.name;
  data.seed = seed.value;
  data.y.reserve(n);
  data.x.reserve(n);
  data.w.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = draw(x_law, rng);
    double w = 0.0;
    double y = 0.0;
    if (spec.family == RegressionFamily::NegBin) {
      w = draw(Family::gamma(spec.theta, spec.theta), rng);
      y = draw(Family::poisson(std::exp(spec.alpha + spec.beta * x) * w), rng);
    } else {
      if (const auto* d = std::get_if<DiscreteCovariate>(&spec.covariate)) {
        w = draw_level(*d, x, rng);
      } else {
        const auto& law = std::get<CovariateLaw>(spec.covariate);
        w = law.is_degenerate() ? law.point_mass(x) : law.sampler(x, rng);
      }
      const double eta = spec.linear_predictor(x, w);
      switch (spec.family) {
        case RegressionFamily::Linear: y = draw(Family::normal(eta, spec.noise_sd), rng); break;
        case RegressionFamily::Logistic: y = draw(Family::bernoulli(sigmoid(eta)), rng); break;
        default: y = draw(Family::poisson(std::exp(eta)), rng); break;
      }
    }
    data.x.push_back(x);
    data.w.push_back(w);
    data.y.push_back(y);
  }
  return data;
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << "y,x,w\n";
  out.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) out << data.y[i] << ',' << data.x[i] << ',' << data.w[i] << '\n';
}

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "y,x,w") {
    throw Error(ErrorKind::IoError, "dataset CSV must start with the header y,x,w");
  }
  Dataset data;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(trim(cell));
    if (cells.size() != 3) throw Error(ErrorKind::IoError, "row " + std::to_string(row) + ": expected 3 fields");
    double v[3];
    for (int k = 0; k < 3; ++k) {
      const std::string& t = cells[static_cast<std::size_t>(k)];
      char* end = nullptr;
      v[k] = std::strtod(t.c_str(), &end);
      if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v[k])) {
        throw Error(ErrorKind::IoError, "row " + std::to_string(row) + ": bad number '" + t + "'");
      }
    }
    data.y.push_back(v[0]);
    data.x.push_back(v[1]);
    data.w.push_back(v[2]);
  }
  return data;
}

FitResult fit_linear(const Dataset& data, bool include_w) {
  const std::size_t n = data.size();
  const Columns cols = design(data, include_w);
  require(n > cols.size(), ErrorKind::InvalidParams, "OLS needs more records than coefficients");
  const std::vector<double> ones(n, 1.0);
  const Eigen::MatrixXd gram = weighted_gram(cols, ones);
  require_full_rank(gram);
  const Eigen::VectorXd b = gram.ldlt().solve(cross(cols, data.y));

  std::vector<double> resid = data.y;
  for (std::size_t j = 0; j < cols.size(); ++j) kernels::axpy(-b(static_cast<Eigen::Index>(j)), cols[j], resid);
  const double rss = kernels::dot(resid, resid);
  const double dof = static_cast<double>(n - cols.size());

  FitResult fit;
  fit.coefficients = to_vector(b);
  fit.std_errors = standard_errors(gram, rss / dof);
  fit.converged = true;
  fit.iterations = 1;
  fit.score_norm = cross(cols, resid).cwiseAbs().maxCoeff();
  const double nn = static_cast<double>(n);
  const double sigma2 = std::max(rss / nn, std::numeric_limits<double>::min());
  fit.log_likelihood = -0.5 * nn * (std::log(2.0 * M_PI * sigma2) + 1.0);
  return fit;
}

FitResult fit_glm(const Dataset& data, RegressionFamily family, bool include_w, const GlmOptions& options) {
  require(family == RegressionFamily::Logistic || family == RegressionFamily::Poisson, ErrorKind::InvalidParams,
          "fit_glm handles the logistic and poisson families");
  return irls(data, GlmFamily{family, 0.0}, include_w, options);
}

double moment_theta(const Dataset& data) {
  const FitResult pois = fit_glm(data, RegressionFamily::Poisson, false);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double mu = std::exp(pois.coefficients[0] + pois.coefficients[1] * data.x[i]);
    num += mu * mu;
    den += (data.y[i] - mu) * (data.y[i] - mu) - mu;
  }
  if (!(den > 0.0)) {
    throw Error(ErrorKind::Underdispersed,
                "variance does not exceed the mean; the moment estimate of theta is undefined");
  }
  return num / den;
}

FitResult fit_negbin(const Dataset& data, std::optional<double> theta, const GlmOptions& options) {
  const double t = theta ? *theta : moment_theta(data);
  require(t > 0.0 && std::isfinite(t), ErrorKind::InvalidParams, "theta must be positive");
  FitResult fit = irls(data, GlmFamily{RegressionFamily::NegBin, t}, false, options);
  fit.theta = t;
  return fit;
}

BetaVerdict check_beta_collapsibility(const RegressionSpec& spec, std::size_t n, const Family& x_law, Seed seed,
                                      std::span<const double> x_probe_points) {
  spec.validate(x_probe_points);
  require(!x_probe_points.empty(), ErrorKind::InvalidParams, "needs at least one probe x");
  const Dataset data = simulate(spec, n, x_law, seed);

  BetaVerdict v;
  v.spec_name = spec.name;
  v.family = spec.family;
  v.n = n;
  v.seed = seed.value;
  v.marginal = fit_marginal(spec, data);

  const auto* discrete = spec.family == RegressionFamily::NegBin ? nullptr
                                                                  : std::get_if<DiscreteCovariate>(&spec.covariate);
  std::vector<double> frequencies;
  if (discrete) {
    v.levels = discrete->levels;
    for (double level : discrete->levels) {
      const Dataset stratum = subset(data, level);
      require(stratum.size() >= kMinStratum, ErrorKind::InvalidParams,
              spec.name + ": stratum w=" + std::to_string(level) + " has only " + std::to_string(stratum.size()) +
                  " records");
      v.conditional.push_back(fit_marginal(spec, stratum));
      frequencies.push_back(static_cast<double>(stratum.size()) / static_cast<double>(n));
    }
    double avg = 0.0;
    for (std::size_t k = 0; k < frequencies.size(); ++k) avg += frequencies[k] * v.conditional[k].slope();
    v.unconditional_average = avg;
  } else if (spec.family == RegressionFamily::NegBin) {
    // the conditional model is Poisson with log w as an offset
    GlmOptions opt;
    opt.offset.resize(n);
    for (std::size_t i = 0; i < n; ++i) opt.offset[i] = std::log(data.w[i]);
    v.conditional.push_back(fit_glm(data, RegressionFamily::Poisson, false, opt));
  } else if (spec.family == RegressionFamily::Linear) {
    v.conditional.push_back(fit_linear(data, true));
  } else {
    v.conditional.push_back(fit_glm(data, spec.family, true));
  }

  const double marg_var = v.marginal.slope_se() * v.marginal.slope_se();
  bool all_within = true;
  for (double x : x_probe_points) {
    BetaPoint p;
    p.x = x;
    double var = 0.0;
    if (discrete) {
      const auto probs = discrete->probabilities(x);
      for (std::size_t k = 0; k < probs.size(); ++k) {
        p.conditional += probs[k] * v.conditional[k].slope();
        var += probs[k] * probs[k] * v.conditional[k].slope_se() * v.conditional[k].slope_se();
      }
    } else {
      p.conditional = v.conditional.front().slope();
      var = v.conditional.front().slope_se() * v.conditional.front().slope_se();
    }
    p.marginal = v.marginal.slope();
    p.gap = std::abs(p.conditional - p.marginal);
    p.tolerance = kBand * std::sqrt(var + marg_var);
    p.within = p.gap <= p.tolerance;
    all_within = all_within && p.within;
    v.points.push_back(p);
  }
  v.classification = all_within ? Classification::AverageCollapsible : Classification::NotCollapsible;

  int sign = 0;
  for (const auto& f : v.conditional) {
    const int s = strict_sign(f.slope(), f.slope_se());
    if (s == 0 || (sign != 0 && s != sign)) {
      sign = 0;
      break;
    }
    sign = s;
  }
  v.reversal = sign != 0 && strict_sign(v.marginal.slope(), v.marginal.slope_se()) == -sign;
  return v;
}

}  // namespace collapse
