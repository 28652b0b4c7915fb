#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "collapse/collapsibility.hpp"
#include "collapse/errors.hpp"
#include "collapse/models.hpp"
#include "doctest.h"

using namespace collapse;

namespace {

const ConditionProbe& probe(const std::vector<ConditionProbe>& probes, const std::string& name) {
  for (const auto& p : probes) {
    if (p.name == name) return p;
  }
  FAIL("missing probe " << name);
  return probes.front();
}

ErrorKind failure_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::InvalidParams;
}

}  // namespace

TEST_CASE("grid validation and tolerance") {
  GridSpec g{{1.0, 2.0}, {}, {}};
  CHECK_NOTHROW(g.validate());
  CHECK(g.tolerance(0.0) == 1e-5);
  CHECK(g.tolerance(1000.0) == doctest::Approx(0.1));
  double last = 0.0;
  for (double r : {0.0, 0.01, 0.1, 1.0, 10.0, 100.0}) {
    CHECK(g.tolerance(r) >= last);
    last = g.tolerance(r);
  }
  CHECK(failure_kind([] { GridSpec{{}, {}, {}}.validate(); }) == ErrorKind::InvalidParams);
  CHECK(failure_kind([] { GridSpec{{2.0, 1.0}, {}, {}}.validate(); }) == ErrorKind::InvalidParams);
  CHECK(failure_kind([] { GridSpec{{1.0}, {}, {}, 0.0}.validate(); }) == ErrorKind::InvalidParams);
  CHECK(failure_kind([] { check_average(MeasureKind::MDI, models::power_density(), GridSpec{{1.0}, {}, {}}); }) ==
        ErrorKind::InvalidParams);
  CHECK(failure_kind([] { check_simple(MeasureKind::EDF, models::uniform_normal(), GridSpec{{1.0}, {}, {}}); }) ==
        ErrorKind::InvalidParams);
}

TEST_CASE("EDF of the uniform-normal example is average but not simple collapsible") {
  const auto m = models::uniform_normal();
  const GridSpec grid{{0.5, 1.0, 1.5, 2.0}, {}, {-1.0, 0.0, 1.0, 3.0}};
  const auto avg = check_average(MeasureKind::EDF, m, grid);
  CHECK(avg.classification == Classification::AverageCollapsible);
  CHECK(avg.check == "average");
  REQUIRE(avg.points.size() == 4);
  for (const auto& p : avg.points) {
    CAPTURE(p.x);
    CHECK_FALSE(p.failure);
    CHECK(p.marginal.value == doctest::Approx(p.x).epsilon(1e-7));
    CHECK(p.conditional.value == doctest::Approx(p.x).epsilon(1e-7));
    CHECK(std::abs(edf_residual(m, p.x).value) <= 1e-6);
  }
  const auto simple = check_simple(MeasureKind::EDF, m, grid);
  CHECK(simple.classification == Classification::AverageCollapsible);
  CHECK(simple.points.size() == 4 * 4 + 4);
  CHECK(simple.max_gap > 1.0);
}

TEST_CASE("MDI of the power density is average collapsible away from the support edge") {
  const auto m = models::power_density();
  const GridSpec grid{{1.0, 1.5, 2.0}, {0.01, 0.02}, {-1.0, 0.0, 1.0, 2.0}};
  const auto v = check_average(MeasureKind::MDI, m, grid);
  CHECK(v.classification == Classification::AverageCollapsible);
  for (const auto& p : v.points) {
    CAPTURE(p.x);
    CAPTURE(*p.y);
    CHECK(p.conditional.value == doctest::Approx(1.0 / *p.y).epsilon(1e-6));
    CHECK(p.excluded_mass >= 0.0);
    CHECK(p.excluded_mass < 1.0);
  }
  REQUIRE(v.reversal);
  CHECK_FALSE(v.reversal->reversal);
  CHECK(v.reversal->conditional_sign == 1);
}

TEST_CASE("product mean: the gap is the EDF residual") {
  // E(Y|x,w) = x w with W ~ N(x, 1): conditional average x, marginal 2x,
  // residual E[x W (W - x)] = x
  const auto m = models::product_mean();
  const GridSpec grid{{0.5, 1.0, 2.0}, {}, {}};
  const auto v = check_average(MeasureKind::EDF, m, grid);
  CHECK(v.classification == Classification::NotCollapsible);
  for (const auto& p : v.points) {
    CAPTURE(p.x);
    CHECK(p.conditional.value == doctest::Approx(p.x).epsilon(1e-7));
    CHECK(p.marginal.value == doctest::Approx(2.0 * p.x).epsilon(1e-7));
    CHECK(p.gap == doctest::Approx(p.x).epsilon(1e-6));
    const double residual = edf_residual(m, p.x).value;
    CHECK(residual == doctest::Approx(p.x).epsilon(1e-6));
    CHECK(p.marginal.value == doctest::Approx(p.conditional.value + residual).epsilon(1e-6));
  }
  CHECK(v.max_gap == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("decomposition identity holds for a degenerate covariate") {
  // W = 2x, E(Y|x,w) = x + w^2: marginal EDF 1 + 8x, conditional 1,
  // residual 2w * 2 = 8x
  ConditionalModel m;
  m.name = "degenerate";
  m.covariate = CovariateLaw::degenerate([](double x) { return 2.0 * x; });
  m.mean_yxw = [](double x, double w) { return x + w * w; };
  for (double x : {-1.0, 0.5, 2.0}) {
    CHECK(edf_residual(m, x).value == doctest::Approx(8.0 * x).epsilon(1e-7));
  }
  const auto v = check_average(MeasureKind::EDF, m, GridSpec{{0.0, 1.0}, {}, {}});
  CHECK(v.points[0].within);
  CHECK_FALSE(v.points[1].within);
  CHECK(v.classification == Classification::NotCollapsible);
}

TEST_CASE("simple collapsibility") {
  const GridSpec grid{{0.5, 1.0, 2.0}, {}, {0.2, 1.0, 3.0}};
  const auto led_v = check_simple(MeasureKind::LED, models::poisson_loglinear(0.1, 0.3, 0.0), grid);
  CHECK(led_v.classification == Classification::SimpleCollapsible);
  CHECK(led_v.check == "simple");
  REQUIRE(led_v.reversal);
  CHECK_FALSE(led_v.reversal->reversal);

  const auto edf_v = check_simple(MeasureKind::EDF, models::homogeneous_uniform(), grid);
  CHECK(edf_v.classification == Classification::SimpleCollapsible);
  for (const auto& p : edf_v.points) CHECK(p.conditional.value == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("Cochran-style reversal") {
  // E(Y|x,w) = x - w with W ~ N(2x, 1): conditional EDF +1, marginal -1
  const auto m = models::cochran_reversal();
  const GridSpec grid{{-1.0, 0.0, 1.0}, {}, {-2.0, 0.0, 2.0}};
  const auto r = detect_reversal(MeasureKind::EDF, m, grid);
  CHECK(r.reversal);
  CHECK(r.conditional_sign == 1);
  CHECK(r.evidence.size() == 3);
  for (const auto& e : r.evidence) CHECK(e.marginal.value == doctest::Approx(-1.0).epsilon(1e-7));
  const auto v = check_average(MeasureKind::EDF, m, grid);
  CHECK(v.classification == Classification::NotCollapsible);
  CHECK(v.max_gap == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(edf_residual(m, 0.5).value == doctest::Approx(-2.0).epsilon(1e-6));

  CHECK_FALSE(detect_reversal(MeasureKind::EDF, models::uniform_normal(), GridSpec{{0.5, 1.0}, {}, {0.0, 1.0}})
                  .reversal);
}

TEST_CASE("probes on the uniform-normal example all fail while the average holds") {
  const auto m = models::uniform_normal();
  const GridSpec grid{{0.5, 1.0, 1.5}, {0.1, 0.2}, {-0.5, 0.5, 1.0}};
  CheckOptions opt;
  opt.probes = true;
  const auto v = check_average(MeasureKind::EDF, m, grid, {}, opt);
  CHECK(v.classification == Classification::AverageCollapsible);
  REQUIRE(v.probes.size() == 6);
  for (const char* name : {"mean_free_of_w", "x_independent_of_w", "y_independent_of_w_given_x"}) {
    CAPTURE(name);
    CHECK(probe(v.probes, name).status == ProbeStatus::Fail);
  }
}

TEST_CASE("probes on the power density and the homogeneous uniform model") {
  const GridSpec grid{{1.0, 1.5, 2.0}, {0.01, 0.02}, {0.0, 1.0, 2.0}};
  const auto probes = probe_conditions(models::power_density(), grid);
  const auto& slope = probe(probes, "y_log_slope_matches_marginal");
  CHECK(slope.status == ProbeStatus::Pass);
  CHECK(slope.implies == std::vector<MeasureKind>{MeasureKind::MDI});
  CHECK(probe(probes, "y_independent_of_w_given_x").status == ProbeStatus::Fail);

  const auto hu = probe_conditions(models::homogeneous_uniform(), GridSpec{{0.5, 1.0}, {0.7, 1.2}, {0.5, 1.5}});
  CHECK(probe(hu, "mean_free_of_w").status == ProbeStatus::Pass);
  CHECK(probe(hu, "y_independent_of_w_given_x").status == ProbeStatus::Fail);

  const auto bare = probe_conditions(models::uniform_normal(), GridSpec{{1.0}, {}, {}});
  for (const auto& p : bare) {
    CAPTURE(p.name);
    CHECK(p.status == ProbeStatus::Unavailable);
    CHECK_FALSE(p.note.empty());
  }
}

TEST_CASE("numerical failures make the verdict indeterminate") {
  // the mean reaches zero, so LED cannot be formed at x = 1
  const auto m = models::linear_gaussian(-20.0, 0.0, 0.0);
  const auto v = check_average(MeasureKind::LED, m, GridSpec{{1.0}, {}, {}});
  CHECK(v.classification == Classification::Indeterminate);
  REQUIRE(v.points.size() == 1);
  CHECK(v.points[0].failure);
}

TEST_CASE("threaded and serial sweeps agree") {
  const auto m = models::product_mean();
  const GridSpec grid{{0.5, 1.0, 1.5, 2.0, 2.5}, {}, {0.0, 1.0}};
  CheckOptions serial;
  serial.threads = 1;
  CheckOptions pooled;
  pooled.threads = 3;
  const auto a = check_simple(MeasureKind::EDF, m, grid, {}, serial);
  const auto b = check_simple(MeasureKind::EDF, m, grid, {}, pooled);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].x == b.points[i].x);
    CHECK(a.points[i].conditional.value == b.points[i].conditional.value);
  }
}
