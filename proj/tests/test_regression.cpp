#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "collapse/errors.hpp"
#include "collapse/kernels.hpp"
#include "collapse/regression.hpp"
#include "doctest.h"

using namespace collapse;

namespace {

RegressionSpec continuous_spec(RegressionFamily family, double a, double b, double g, double w_slope = 1.0) {
  RegressionSpec s;
  s.family = family;
  s.alpha = a;
  s.beta = b;
  s.gamma = g;
  s.covariate = CovariateLaw::normal([w_slope](double x) { return w_slope * x; }, [](double) { return 1.0; });
  return s;
}

RegressionSpec coin_spec(RegressionFamily family, double b0, double b1) {
  RegressionSpec s;
  s.family = family;
  s.covariate = DiscreteCovariate{{0.0, 1.0}, [](double) { return std::vector<double>{0.5, 0.5}; }};
  s.alpha_by_level = {0.2, -0.3};
  s.beta_by_level = {b0, b1};
  return s;
}

bool within_band(double estimate, double se, double truth) { return std::abs(estimate - truth) <= 3.0 * se; }

ErrorKind failure_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::InvalidParams;
}

double lgamma_pmf_nb(int k, double theta, double mu) {
  return std::exp(std::lgamma(k + theta) - std::lgamma(theta) - std::lgamma(k + 1.0) +
                  theta * std::log(theta / (theta + mu)) + k * std::log(mu / (theta + mu)));
}

}  // namespace

TEST_CASE("simulation is deterministic and noiseless in the limit") {
  auto spec = continuous_spec(RegressionFamily::Linear, 0.5, -1.0, 2.0);
  spec.noise_sd = 1e-9;
  const auto d = simulate(spec, 500, Family::normal(0.0, 1.0), Seed{4});
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d.y[i] - (0.5 - d.x[i] + 2.0 * d.w[i])) < 1e-6);
  const auto again = simulate(spec, 500, Family::normal(0.0, 1.0), Seed{4});
  CHECK(again.y == d.y);
  CHECK(simulate(spec, 500, Family::normal(0.0, 1.0), Seed{5}).y != d.y);
}

TEST_CASE("poisson simulation matches the mean within the CLT band") {
  const auto spec = continuous_spec(RegressionFamily::Poisson, 0.1, 0.3, 0.0);
  const auto d = simulate(spec, 100000, Family::uniform(0.0, 2.0), Seed{9});
  for (double lo : {0.0, 0.5, 1.0, 1.5}) {
    double sum = 0.0;
    double expected = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.x[i] < lo || d.x[i] >= lo + 0.5) continue;
      sum += d.y[i];
      expected += std::exp(0.1 + 0.3 * d.x[i]);
      ++count;
    }
    const double mean = expected / count;
    CAPTURE(lo);
    CHECK(std::abs(sum / count - mean) <= 4.0 * std::sqrt(mean / count));
  }
}

TEST_CASE("negbin simulation has the NB marginal") {
  RegressionSpec spec;
  spec.family = RegressionFamily::NegBin;
  spec.alpha = std::log(1.5);
  spec.theta = 2.0;
  const std::size_t n = 100000;
  const auto d = simulate(spec, n, Family::uniform(0.0, 1.0), Seed{21});
  std::vector<double> freq(12, 0.0);
  for (double y : d.y) {
    if (y < 12) freq[static_cast<std::size_t>(y)] += 1.0 / n;
  }
  for (int k = 0; k < 12; ++k) {
    const double p = lgamma_pmf_nb(k, 2.0, 1.5);
    CAPTURE(k);
    CHECK(std::abs(freq[static_cast<std::size_t>(k)] - p) <= 4.0 * std::sqrt(p * (1.0 - p) / n) + 1e-12);
  }
}

TEST_CASE("OLS") {
  Dataset exact;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  for (int i = 0; i < 50; ++i) {
    exact.x.push_back(z(rng));
    exact.w.push_back(z(rng));
    exact.y.push_back(1.0 + 2.0 * exact.x.back() + 3.0 * exact.w.back());
  }
  const auto f = fit_linear(exact, true);
  CHECK(f.coefficients[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(f.coefficients[1] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(f.coefficients[2] == doctest::Approx(3.0).epsilon(1e-8));

  // Cochran: beta = 1, gamma = -1, W = 2X + e gives a marginal slope of -1
  const auto cochran = continuous_spec(RegressionFamily::Linear, 0.0, 1.0, -1.0, 2.0);
  const auto d = simulate(cochran, 100000, Family::normal(0.0, 1.0), Seed{2});
  const auto marg = fit_linear(d, false);
  CHECK(within_band(marg.slope(), marg.slope_se(), -1.0));
  const auto cond = fit_linear(d, true);
  CHECK(within_band(cond.slope(), cond.slope_se(), 1.0));
  // residuals are orthogonal to every design column
  CHECK(marg.score_norm < 1e-8);
  CHECK(cond.score_norm < 1e-8);

  const auto flat = simulate(continuous_spec(RegressionFamily::Linear, 0.0, 0.7, 0.0), 20000,
                             Family::normal(0.0, 1.0), Seed{3});
  const auto m0 = fit_linear(flat, false);
  const auto c0 = fit_linear(flat, true);
  CHECK(std::abs(m0.slope() - c0.slope()) <= 3.0 * std::hypot(m0.slope_se(), c0.slope_se()));

  Dataset collinear = exact;
  collinear.w = collinear.x;
  CHECK(failure_kind([&] { fit_linear(collinear, true); }) == ErrorKind::RankDeficient);
}

TEST_CASE("omitted-variable formula for the linear marginal slope") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> coef(-1.5, 1.5);
  for (int rep = 0; rep < 6; ++rep) {
    const double b = coef(rng);
    const double g = coef(rng);
    const double a = coef(rng);
    const auto d = simulate(continuous_spec(RegressionFamily::Linear, 0.3, b, g, a), 20000,
                            Family::normal(0.0, 1.0), Seed{100 + static_cast<std::uint64_t>(rep)});
    const auto f = fit_linear(d, false);
    CAPTURE(b);
    CAPTURE(g);
    CAPTURE(a);
    CHECK(within_band(f.slope(), f.slope_se(), b + g * a));
  }
}

TEST_CASE("poisson and logistic IRLS") {
  const auto flat = simulate(continuous_spec(RegressionFamily::Poisson, 0.1, 0.3, 0.0), 20000,
                             Family::uniform(0.0, 2.0), Seed{5});
  const auto m = fit_glm(flat, RegressionFamily::Poisson, false);
  CHECK(m.converged);
  CHECK(m.score_norm < 1e-6 * flat.size());
  CHECK(within_band(m.slope(), m.slope_se(), 0.3));

  const auto full = simulate(continuous_spec(RegressionFamily::Poisson, 0.1, 0.3, -0.4), 20000,
                             Family::uniform(0.0, 2.0), Seed{6});
  const auto c = fit_glm(full, RegressionFamily::Poisson, true);
  CHECK(within_band(c.coefficients[0], c.std_errors[0], 0.1));
  CHECK(within_band(c.coefficients[1], c.std_errors[1], 0.3));
  CHECK(within_band(c.coefficients[2], c.std_errors[2], -0.4));

  const auto logit = simulate(continuous_spec(RegressionFamily::Logistic, -0.5, 1.0, 0.7), 20000,
                              Family::normal(0.0, 1.0), Seed{7});
  const auto l = fit_glm(logit, RegressionFamily::Logistic, true);
  CHECK(within_band(l.coefficients[1], l.std_errors[1], 1.0));
  CHECK(within_band(l.coefficients[2], l.std_errors[2], 0.7));

  Dataset separated{{0, 0, 0, 1, 1, 1}, {-3, -2, -1, 1, 2, 3}, {0, 0, 0, 0, 0, 0}};
  CHECK(failure_kind([&] { fit_glm(separated, RegressionFamily::Logistic, false); }) == ErrorKind::Separation);

  GlmOptions hurried;
  hurried.max_iterations = 1;
  CHECK(failure_kind([&] { fit_glm(full, RegressionFamily::Poisson, true, hurried); }) == ErrorKind::NotConverged);
  CHECK(failure_kind([&] { fit_glm(full, RegressionFamily::Linear, true); }) == ErrorKind::InvalidParams);
}

TEST_CASE("negative binomial regression") {
  RegressionSpec spec;
  spec.family = RegressionFamily::NegBin;
  spec.alpha = 0.1;
  spec.beta = 0.3;
  spec.theta = 2.0;
  const auto d = simulate(spec, 50000, Family::uniform(0.0, 2.0), Seed{8});
  const auto known = fit_negbin(d, 2.0);
  CHECK(known.converged);
  CHECK(within_band(known.slope(), known.slope_se(), 0.3));
  const double theta = moment_theta(d);
  CHECK(std::abs(theta - 2.0) <= 0.3 * 2.0);
  const auto moment = fit_negbin(d);
  REQUIRE(moment.theta);
  CHECK(*moment.theta == doctest::Approx(theta));

  // implied variance exceeds the mean
  const double mu = std::exp(known.coefficients[0] + known.coefficients[1]);
  CHECK(mu * (1.0 + mu / *known.theta) > mu);

  // Poisson data are not overdispersed
  const auto pois = simulate(continuous_spec(RegressionFamily::Poisson, 0.1, 0.3, 0.0), 50000,
                             Family::uniform(0.0, 2.0), Seed{8});
  bool flagged = false;
  try {
    flagged = moment_theta(pois) > 50.0;
  } catch (const Error& e) {
    flagged = e.kind() == ErrorKind::Underdispersed;
  }
  CHECK(flagged);
}

TEST_CASE("coefficient collapsibility") {
  const std::vector<double> probes{0.0, 1.0, 2.0};
  const auto coin = check_beta_collapsibility(coin_spec(RegressionFamily::Linear, 0.4, 0.4), 20000,
                                              Family::uniform(0.0, 2.0), Seed{11}, probes);
  CHECK(coin.classification == Classification::AverageCollapsible);
  CHECK(coin.marginal.slope() == doctest::Approx(0.4).epsilon(0.05));
  REQUIRE(coin.unconditional_average);
  CHECK(coin.conditional.size() == 2);
  CHECK_FALSE(coin.reversal);

  const auto cochran = check_beta_collapsibility(continuous_spec(RegressionFamily::Linear, 0.0, 1.0, -1.0, 2.0),
                                                 100000, Family::normal(0.0, 1.0), Seed{12}, probes);
  CHECK(cochran.classification == Classification::NotCollapsible);
  CHECK(cochran.points[0].gap == doctest::Approx(2.0).epsilon(0.02));
  CHECK(cochran.reversal);

  const auto pois = check_beta_collapsibility(continuous_spec(RegressionFamily::Poisson, 0.1, 0.3, 0.0), 20000,
                                              Family::uniform(0.0, 2.0), Seed{13}, probes);
  CHECK(pois.classification == Classification::AverageCollapsible);

  // x-dependent level probabilities weigh the stratum slopes differently
  auto tilted = coin_spec(RegressionFamily::Linear, 0.2, 1.0);
  tilted.covariate = DiscreteCovariate{{0.0, 1.0}, [](double x) {
                                         const double p = 0.2 + 0.3 * x;
                                         return std::vector<double>{1.0 - p, p};
                                       }};
  const auto t = check_beta_collapsibility(tilted, 40000, Family::uniform(0.0, 2.0), Seed{14}, probes);
  CHECK(t.points[0].conditional == doctest::Approx(0.8 * t.conditional[0].slope() + 0.2 * t.conditional[1].slope()));
  CHECK(t.points[2].conditional == doctest::Approx(0.2 * t.conditional[0].slope() + 0.8 * t.conditional[1].slope()));

  auto sparse = coin_spec(RegressionFamily::Linear, 0.4, 0.4);
  CHECK(failure_kind([&] {
          check_beta_collapsibility(sparse, 60, Family::uniform(0.0, 2.0), Seed{1}, probes);
        }) == ErrorKind::InvalidParams);
  sparse.covariate = DiscreteCovariate{{0.0, 1.0}, [](double) { return std::vector<double>{0.5, 0.6}; }};
  CHECK(failure_kind([&] { sparse.validate(probes); }) == ErrorKind::InvalidParams);
}

TEST_CASE("fits recover the coefficients across seeds") {
  const auto family_sweep = [](const RegressionSpec& spec, const Family& x_law, std::size_t n) {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const auto d = simulate(spec, n, x_law, Seed{1000 + seed});
      FitResult f;
      switch (spec.family) {
        case RegressionFamily::Linear: f = fit_linear(d, true); break;
        case RegressionFamily::NegBin: f = fit_negbin(d, spec.theta); break;
        default: f = fit_glm(d, spec.family, true); break;
      }
      hits += within_band(f.slope(), f.slope_se(), spec.beta) ? 1 : 0;
    }
    return hits;
  };
  CHECK(family_sweep(continuous_spec(RegressionFamily::Linear, 0.5, 0.8, -0.3), Family::normal(0, 1), 2000) >= 38);
  CHECK(family_sweep(continuous_spec(RegressionFamily::Logistic, -0.2, 0.8, 0.5), Family::normal(0, 1), 2000) >= 38);
  CHECK(family_sweep(continuous_spec(RegressionFamily::Poisson, 0.1, 0.3, 0.2), Family::normal(0, 1), 2000) >= 38);
  RegressionSpec nb;
  nb.family = RegressionFamily::NegBin;
  nb.alpha = 0.1;
  nb.beta = 0.3;
  nb.theta = 2.0;
  CHECK(family_sweep(nb, Family::uniform(0, 2), 2000) >= 38);
}

TEST_CASE("fits agree across kernel backends") {
  const auto d = simulate(continuous_spec(RegressionFamily::Poisson, 0.1, 0.3, -0.2), 5000,
                          Family::uniform(0.0, 2.0), Seed{31});
  FitResult reference;
  {
    kernels::ScopedBackend scalar(kernels::Backend::Scalar);
    reference = fit_glm(d, RegressionFamily::Poisson, true);
  }
  for (auto backend : kernels::available_backends()) {
    kernels::ScopedBackend use(backend);
    const auto f = fit_glm(d, RegressionFamily::Poisson, true);
    for (std::size_t j = 0; j < 3; ++j) CHECK(f.coefficients[j] == doctest::Approx(reference.coefficients[j]).epsilon(1e-9));
  }
}

TEST_CASE("CSV round trip") {
  const auto d = simulate(continuous_spec(RegressionFamily::Linear, 0.5, -1.0, 2.0), 20,
                          Family::normal(0.0, 1.0), Seed{4});
  std::stringstream ss;
  write_csv(d, ss);
  const auto back = read_csv(ss);
  CHECK(back.y == d.y);
  CHECK(back.x == d.x);
  CHECK(back.w == d.w);

  std::stringstream bad_header("x,y,w\n1,2,3\n");
  CHECK(failure_kind([&] { read_csv(bad_header); }) == ErrorKind::IoError);
  std::stringstream bad_row("y,x,w\n1,2\n");
  CHECK(failure_kind([&] { read_csv(bad_row); }) == ErrorKind::IoError);
  std::stringstream extra("y,x,w\n1,2,3,4\n");
  CHECK(failure_kind([&] { read_csv(extra); }) == ErrorKind::IoError);
  std::stringstream junk("y,x,w\n1,abc,3\n");
  CHECK(failure_kind([&] { read_csv(junk); }) == ErrorKind::IoError);
}
