#include <cmath>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

#include "collapse/errors.hpp"
#include "collapse/numerics.hpp"
#include "doctest.h"

using namespace collapse;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::InvalidParams;
}

}  // namespace

TEST_CASE("normal density integrates to one over the real line") {
  auto r = integrate(normal_pdf, Interval::real_line());
  CHECK(std::abs(r.value - 1.0) <= 1e-10);
  CHECK(r.err_estimate >= 0.0);
  CHECK(r.evaluations > 0);
}

TEST_CASE("odd moments of the normal vanish") {
  for (int k : {1, 3, 5}) {
    CAPTURE(k);
    auto r = integrate([k](double t) { return std::pow(t, k) * normal_pdf(t); },
                       Interval::real_line());
    CHECK(std::abs(r.value) <= 1e-10);
  }
}

TEST_CASE("polynomial on a finite interval") {
  auto r = integrate([](double x) { return x * x; }, {0.0, 1.0});
  CHECK(r.value == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("half-lines in both directions") {
  auto right = integrate([](double t) { return std::exp(-t); }, {0.0, kInf});
  CHECK(right.value == doctest::Approx(1.0).epsilon(1e-10));
  auto left = integrate([](double t) { return std::exp(t); }, {-kInf, 0.0});
  CHECK(left.value == doctest::Approx(1.0).epsilon(1e-10));
  auto shifted = integrate(normal_pdf, {1.0, kInf});
  CHECK(shifted.value == doctest::Approx(1.0 - normal_cdf(1.0)).epsilon(1e-10));
}

TEST_CASE("breakpoints handle a kink") {
  const double bp[] = {0.3};
  auto r = integrate([](double t) { return std::abs(t - 0.3); }, {0.0, 1.0}, bp);
  CHECK(r.value == doctest::Approx(0.5 * (0.09 + 0.49)).epsilon(1e-13));
}

TEST_CASE("integrable endpoint singularities") {
  CHECK(integrate([](double t) { return 1.0 / std::sqrt(t); }, {0.0, 1.0}).value ==
        doctest::Approx(2.0).epsilon(1e-10));
  // Gamma(shape 0.2) density against its closed-form normalizer
  const double shape = 0.2;
  const double mass = integrate(
                          [&](double t) {
                            return std::pow(t, shape - 1.0) * std::exp(-t) / std::tgamma(shape);
                          },
                          Interval::positive())
                          .value;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(integrate([](double t) { return std::log(std::abs(t)); }, {-1.0, 1.0}, std::vector<double>{0.0})
            .value == doctest::Approx(-2.0).epsilon(1e-10));
}

TEST_CASE("integrate is linear") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = u(rng), b = u(rng), c1 = u(rng), c2 = u(rng);
    auto f = [c1](double t) { return std::sin(c1 * t) * normal_pdf(t); };
    auto g = [c2](double t) { return std::exp(-(t - c2) * (t - c2)); };
    auto fi = integrate(f, Interval::real_line());
    auto gi = integrate(g, Interval::real_line());
    auto hi = integrate([&](double t) { return a * f(t) + b * g(t); }, Interval::real_line());
    const double tol = std::abs(a) * fi.err_estimate + std::abs(b) * gi.err_estimate +
                       hi.err_estimate + 1e-12;
    CHECK(std::abs(hi.value - (a * fi.value + b * gi.value)) <= tol);
  }
}

TEST_CASE("integrate reports non-finite integrands and exhausted budgets") {
  CHECK(kind_of([] { integrate([](double) { return std::nan(""); }, {0.0, 1.0}); }) ==
        ErrorKind::NonFiniteEvaluation);
  QuadratureSpec tight;
  tight.max_subdivisions = 1;
  tight.abs_tol = 1e-15;
  tight.rel_tol = 1e-15;
  CHECK(kind_of([&] {
          integrate([](double t) { return std::sin(200.0 * t); }, {0.0, 10.0}, tight);
        }) == ErrorKind::NonConvergence);
}

TEST_CASE("invalid specs are rejected") {
  QuadratureSpec bad;
  bad.abs_tol = 0.0;
  CHECK(kind_of([&] { integrate(normal_pdf, {0.0, 1.0}, bad); }) == ErrorKind::InvalidParams);
  CHECK(kind_of([] { integrate(normal_pdf, {1.0, 0.0}); }) == ErrorKind::InvalidParams);
  QuadratureSpec nodes;
  nodes.hermite_nodes = 1;
  CHECK(kind_of([&] { gauss_hermite_expectation(normal_pdf, 0.0, 1.0, nodes); }) ==
        ErrorKind::InvalidParams);
  CHECK(kind_of([] { gauss_hermite_expectation(normal_pdf, 0.0, 0.0); }) ==
        ErrorKind::InvalidParams);
  DiffSpec d;
  d.base_step = -1.0;
  CHECK(kind_of([&] { differentiate(normal_pdf, 0.0, d); }) == ErrorKind::InvalidParams);
}

TEST_CASE("Gauss-Hermite expectations") {
  for (double x : {-1.0, 0.0, 0.7, 3.0}) {
    CAPTURE(x);
    auto m = gauss_hermite_expectation([](double t) { return t; }, x, 1.0);
    CHECK(m.value == doctest::Approx(x).epsilon(1e-13).scale(1.0));
    auto v = gauss_hermite_expectation([x](double t) { return (t - x) * (t - x); }, x, 1.0);
    auto oracle = integrate([x](double t) { return (t - x) * (t - x) * normal_pdf(t - x); },
                            Interval::real_line());
    CHECK(v.value == doctest::Approx(oracle.value).epsilon(1e-10));
    CHECK(v.value == doctest::Approx(1.0).epsilon(1e-12));
  }
  const double x = 1.0;
  auto m2 = gauss_hermite_expectation([x](double t) { return x * x + (t - x) * (t - x); }, x, 1.0);
  CHECK(m2.value == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("Gauss-Hermite is exact for polynomials below degree 2n") {
  QuadratureSpec spec;
  spec.hermite_nodes = 6;
  // E[Z^10] = 9!! = 945
  auto r = gauss_hermite_expectation([](double t) { return std::pow(t, 10); }, 0.0, 1.0, spec);
  CHECK(r.value == doctest::Approx(945.0).epsilon(1e-11));
}

TEST_CASE("Gauss-Hermite agrees with adaptive quadrature on random smooth functions") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.3, 1.5);
  for (int trial = 0; trial < 50; ++trial) {
    CAPTURE(trial);
    const double a0 = u(rng), a1 = u(rng), a2 = u(rng), a3 = u(rng);
    const double freq = pos(rng), width = pos(rng);
    const double mean = 2.0 * u(rng), sd = pos(rng);
    auto g = [=](double t) {
      return a0 + a1 * t + a2 * std::sin(freq * t) + a3 * std::exp(-t * t / width);
    };
    auto gh = gauss_hermite_expectation(g, mean, sd);
    auto ad = integrate([&](double t) { return g(t) * normal_pdf((t - mean) / sd) / sd; },
                        Interval::real_line());
    CHECK(std::abs(gh.value - ad.value) <= 2.0 * (gh.err_estimate + ad.err_estimate));
  }
}

TEST_CASE("Hermite and Legendre rules are normalized") {
  for (int n : {2, 5, 16, 64}) {
    const auto& h = hermite_rule(n);
    double s = 0.0;
    for (double w : h.weights) s += w;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-13));
    const auto& l = legendre_rule(n);
    double t = 0.0;
    for (double w : l.weights) t += w;
    CHECK(t == doctest::Approx(2.0).epsilon(1e-13));
  }
}

TEST_CASE("integrate_fixed") {
  auto r = integrate_fixed([](double t) { return std::exp(t); }, {0.0, 2.0}, 8);
  CHECK(r.value == doctest::Approx(std::exp(2.0) - 1.0).epsilon(1e-14));
  CHECK(r.err_estimate < 1e-10);
}

TEST_CASE("differentiate closed forms") {
  auto sq = differentiate([](double x) { return x * x; }, 1.0);
  CHECK(std::abs(sq.value - 2.0) <= 1e-8);
  auto phi = differentiate(normal_pdf, 0.0);
  CHECK(std::abs(phi.value) <= 1e-10);
  auto half = differentiate([](double x) { return 0.5 * (x * x + 1.0); }, 1.5);
  CHECK(std::abs(half.value - 1.5) <= 1e-8);
}

TEST_CASE("differentiate is exact on cubics") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    const double c0 = u(rng), c1 = u(rng), c2 = u(rng), c3 = u(rng), at = u(rng);
    auto f = [=](double x) { return ((c3 * x + c2) * x + c1) * x + c0; };
    const double exact = (3.0 * c3 * at + 2.0 * c2) * at + c1;
    CHECK(std::abs(differentiate(f, at).value - exact) <= 1e-9);
  }
}

TEST_CASE("differentiate falls back to one-sided stencils at a boundary") {
  const Interval domain{0.0, kInf};
  auto r = differentiate([](double x) { return std::exp(x) + x * x; }, 1e-7, {}, domain);
  CHECK(r.value == doctest::Approx(std::exp(1e-7) + 2e-7).epsilon(1e-9));
  auto lin = differentiate([](double x) { return 3.0 * x; }, 0.0, {}, domain);
  CHECK(lin.value == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("differentiate reports non-finite values") {
  CHECK(kind_of([] {
          differentiate([](double x) { return x > 1.0 ? std::nan("") : x; }, 1.0);
        }) == ErrorKind::NonFiniteEvaluation);
}

TEST_CASE("mixed_partial of log densities") {
  auto bilinear = mixed_partial([](double x, double y) { return std::exp(x * y); }, 0.4, -1.2);
  CHECK(bilinear.value == doctest::Approx(1.0).epsilon(1e-8));
  auto product = mixed_partial(
      [](double x, double y) { return normal_pdf(x) * (1.0 + y * y); }, 0.3, 0.8);
  CHECK(std::abs(product.value) <= 1e-8);
  for (double w : {-1.0, 0.0, 1.0, 2.5}) {
    CAPTURE(w);
    auto power = mixed_partial(
        [w](double x, double y) {
          return x * std::pow(y, x - 1.0) * (x * x + (w - x) * (w - x));
        },
        1.0, 0.05);
    CHECK(power.value == doctest::Approx(20.0).epsilon(1e-6));
  }
}

TEST_CASE("mixed_partial is symmetric in the order of differentiation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng), x = u(rng), y = u(rng);
    auto f = [=](double s, double t) {
      return std::exp(a * s * s + b * s * t * t + c * std::sin(s * t));
    };
    auto swapped = [&](double s, double t) { return f(t, s); };
    auto r1 = mixed_partial(f, x, y);
    auto r2 = mixed_partial(swapped, y, x);
    CHECK(std::abs(r1.value - r2.value) <= 1e-6);
  }
}

TEST_CASE("mixed_partial rejects non-positive densities") {
  CHECK(kind_of([] {
          mixed_partial([](double x, double y) { return x * y; }, 0.0, 1.0);
        }) == ErrorKind::NonPositiveDensity);
}

TEST_CASE("numerics are safe to call concurrently") {
  std::vector<double> out(8);
  std::vector<std::thread> pool;
  for (int i = 0; i < 8; ++i) {
    pool.emplace_back([i, &out] {
      QuadratureSpec spec;
      spec.hermite_nodes = 20 + i;
      out[i] = gauss_hermite_expectation([](double t) { return t * t; }, 0.0, 1.0, spec).value +
               integrate(normal_pdf, Interval::real_line()).value;
    });
  }
  for (auto& t : pool) t.join();
  for (double v : out) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
}
