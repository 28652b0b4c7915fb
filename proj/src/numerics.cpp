#include "collapse/numerics.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <queue>
#include <string>

#include "collapse/errors.hpp"
#include "collapse/kernels.hpp"

namespace collapse {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Kronrod 15-point abscissae and weights with the embedded 7-point Gauss
// weights, laid out over all 15 nodes (zero where the node is Kronrod-only).
constexpr std::array<double, 15> kKronrodNodes = {
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245,  0.405845151377397166906606412076961,
    0.586087235467691130294144845693013,  0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,  0.949107912342758524526189684047851,
    0.991455371120812639206854697526329};

constexpr std::array<double, 15> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970};

constexpr std::array<double, 15> kGaussWeights = {
    0.0, 0.129484966168869693270611432679082, 0.0, 0.279705391489276667901467771423780,
    0.0, 0.381830050505118944950369775488975, 0.0, 0.417959183673469387755102040816327,
    0.0, 0.381830050505118944950369775488975, 0.0, 0.279705391489276667901467771423780,
    0.0, 0.129484966168869693270611432679082, 0.0};

enum class MapKind { Identity, RealLine, UpperHalf, LowerHalf };

// One piece of the domain and the change of variables that makes it finite.
struct Piece {
  MapKind kind;
  double anchor;  // a for UpperHalf, b for LowerHalf
  double u_lo;
  double u_hi;
};

struct Segment {
  double a;
  double b;
  std::size_t piece;
  double value;
  double err;
  double resabs;
  bool operator<(const Segment& other) const { return err < other.err; }
};

double check_finite(double v, double t) {
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::NonFiniteEvaluation,
                "integrand returned " + std::to_string(v) + " at t=" + std::to_string(t));
  }
  return v;
}

double eval_mapped(const RealFunction& f, const Piece& p, double u) {
  switch (p.kind) {
    case MapKind::Identity:
      return check_finite(f(u), u);
    case MapKind::RealLine: {
      const double d = 1.0 - u * u;
      const double t = u / d;
      const double fv = check_finite(f(t), t);
      return fv == 0.0 ? 0.0 : fv * (1.0 + u * u) / (d * d);
    }
    case MapKind::UpperHalf: {
      const double d = 1.0 - u;
      const double t = p.anchor + u / d;
      const double fv = check_finite(f(t), t);
      return fv == 0.0 ? 0.0 : fv / (d * d);
    }
    case MapKind::LowerHalf: {
      const double d = 1.0 - u;
      const double t = p.anchor - u / d;
      const double fv = check_finite(f(t), t);
      return fv == 0.0 ? 0.0 : fv / (d * d);
    }
  }
  return 0.0;
}

Segment kronrod15(const RealFunction& f, const std::vector<Piece>& pieces, std::size_t piece,
                  double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  std::array<double, 15> fv{};
  for (std::size_t i = 0; i < 15; ++i) {
    fv[i] = eval_mapped(f, pieces[piece], center + half * kKronrodNodes[i]);
  }
  const double resk = kernels::dot(kKronrodWeights, fv);
  const double resg = kernels::dot(kGaussWeights, fv);
  const double mean = 0.5 * resk;
  double resabs = 0.0;
  double resasc = 0.0;
  for (std::size_t i = 0; i < 15; ++i) {
    resabs += kKronrodWeights[i] * std::abs(fv[i]);
    resasc += kKronrodWeights[i] * std::abs(fv[i] - mean);
  }
  resabs *= std::abs(half);
  resasc *= std::abs(half);
  double err = std::abs((resk - resg) * half);
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  if (resabs > std::numeric_limits<double>::min() / (50.0 * kEps)) {
    err = std::max(50.0 * kEps * resabs, err);
  }
  return Segment{a, b, piece, resk * half, err, resabs};
}

// Double-exponential rule over a whole piece. Used when bisection stalls
// next to an integrable endpoint singularity, which these rules absorb.
std::optional<EstimatedReal> double_exponential(const RealFunction& f, const Piece& p,
                                                double tolerance) {
  auto g = [&](double t) { return check_finite(f(t), t); };
  double err = 0.0;
  double l1 = 0.0;
  std::size_t levels = 0;
  try {
    double value = 0.0;
    switch (p.kind) {
      case MapKind::Identity: {
        thread_local boost::math::quadrature::tanh_sinh<double> rule;
        value = rule.integrate(g, p.u_lo, p.u_hi, tolerance, &err, &l1, &levels);
        break;
      }
      case MapKind::UpperHalf: {
        thread_local boost::math::quadrature::exp_sinh<double> rule;
        value = rule.integrate(g, p.anchor, kInf, tolerance, &err, &l1, &levels);
        break;
      }
      case MapKind::LowerHalf: {
        thread_local boost::math::quadrature::exp_sinh<double> rule;
        value = rule.integrate(g, -kInf, p.anchor, tolerance, &err, &l1, &levels);
        break;
      }
      case MapKind::RealLine: {
        thread_local boost::math::quadrature::sinh_sinh<double> rule;
        value = rule.integrate(g, tolerance, &err, &l1, &levels);
        break;
      }
    }
    if (!std::isfinite(value) || !std::isfinite(err)) return std::nullopt;
    return EstimatedReal{value, std::max(err, 50.0 * kEps * l1), 0};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<Piece> build_pieces(Interval domain, std::span<const double> breakpoints) {
  std::vector<double> cuts;
  for (double p : breakpoints) {
    if (std::isfinite(p) && domain.contains(p)) cuts.push_back(p);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<double> edges;
  edges.push_back(domain.lower);
  edges.insert(edges.end(), cuts.begin(), cuts.end());
  edges.push_back(domain.upper);

  std::vector<Piece> pieces;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double lo = edges[i];
    const double hi = edges[i + 1];
    if (std::isfinite(lo) && std::isfinite(hi)) {
      pieces.push_back({MapKind::Identity, 0.0, lo, hi});
    } else if (!std::isfinite(lo) && !std::isfinite(hi)) {
      pieces.push_back({MapKind::RealLine, 0.0, -1.0, 1.0});
    } else if (std::isfinite(lo)) {
      pieces.push_back({MapKind::UpperHalf, lo, 0.0, 1.0});
    } else {
      pieces.push_back({MapKind::LowerHalf, hi, 0.0, 1.0});
    }
  }
  return pieces;
}

std::unique_ptr<QuadratureRule> golub_welsch(int n, bool legendre) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double off = legendre ? k / std::sqrt(4.0 * k * k - 1.0) : std::sqrt(double(k));
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  auto rule = std::make_unique<QuadratureRule>();
  rule->nodes.resize(n);
  rule->weights.resize(n);
  const double mass = legendre ? 2.0 : 1.0;
  for (int i = 0; i < n; ++i) {
    rule->nodes[i] = solver.eigenvalues()(i);
    const double v0 = solver.eigenvectors()(0, i);
    rule->weights[i] = mass * v0 * v0;
  }
  // Symmetrize so that odd integrands cancel exactly.
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (rule->nodes[j] - rule->nodes[i]);
    const double w = 0.5 * (rule->weights[i] + rule->weights[j]);
    rule->nodes[i] = -x;
    rule->nodes[j] = x;
    rule->weights[i] = w;
    rule->weights[j] = w;
  }
  if (n % 2 == 1) rule->nodes[n / 2] = 0.0;
  return rule;
}

const QuadratureRule& cached_rule(int n, bool legendre) {
  static std::mutex mutex;
  static std::map<std::pair<int, bool>, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{n, legendre}];
  if (!slot) slot = golub_welsch(n, legendre);
  return *slot;
}

double composite_legendre(const RealFunction& f, Interval domain, int panels, int order,
                          long& evaluations) {
  const QuadratureRule& rule = legendre_rule(order);
  const double width = domain.width() / panels;
  std::vector<double> values(static_cast<std::size_t>(panels) * order);
  std::vector<double> weights(values.size());
  for (int p = 0; p < panels; ++p) {
    const double center = domain.lower + (p + 0.5) * width;
    for (int i = 0; i < order; ++i) {
      const double t = center + 0.5 * width * rule.nodes[i];
      const std::size_t k = static_cast<std::size_t>(p) * order + i;
      values[k] = check_finite(f(t), t);
      weights[k] = 0.5 * width * rule.weights[i];
    }
  }
  evaluations += static_cast<long>(values.size());
  return kernels::dot(weights, values);
}

}  // namespace

void Interval::validate() const {
  if (std::isnan(lower) || std::isnan(upper) || !(lower < upper)) {
    throw Error(ErrorKind::InvalidParams, "interval requires lower < upper, got [" +
                                              std::to_string(lower) + ", " +
                                              std::to_string(upper) + "]");
  }
}

void QuadratureSpec::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) {
    throw Error(ErrorKind::InvalidParams, "quadrature tolerances must be positive");
  }
  if (hermite_nodes < 2) throw Error(ErrorKind::InvalidParams, "hermite_nodes must be >= 2");
  if (max_subdivisions < 1) {
    throw Error(ErrorKind::InvalidParams, "max_subdivisions must be >= 1");
  }
}

void DiffSpec::validate() const {
  if (!(base_step > 0.0)) throw Error(ErrorKind::InvalidParams, "base_step must be positive");
  if (richardson_levels < 0) {
    throw Error(ErrorKind::InvalidParams, "richardson_levels must be >= 0");
  }
}

EstimatedReal integrate(const RealFunction& f, Interval domain, const QuadratureSpec& spec) {
  return integrate(f, domain, std::span<const double>{}, spec);
}

EstimatedReal integrate(const RealFunction& f, Interval domain, std::span<const double> breakpoints,
                        const QuadratureSpec& spec) {
  domain.validate();
  spec.validate();
  const std::vector<Piece> pieces = build_pieces(domain, breakpoints);

  std::priority_queue<Segment> heap;
  double total = 0.0;
  double total_err = 0.0;
  long evaluations = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    Segment s = kronrod15(f, pieces, i, pieces[i].u_lo, pieces[i].u_hi);
    evaluations += 15;
    total += s.value;
    total_err += s.err;
    heap.push(s);
  }

  int subdivisions = 0;
  auto tolerance = [&] { return std::max(spec.abs_tol, spec.rel_tol * std::abs(total)); };
  while (total_err > tolerance()) {
    const Segment worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    const bool too_narrow =
        std::abs(worst.b - worst.a) <= 64.0 * kEps * std::max(1.0, std::abs(mid)) ||
        mid <= worst.a || mid >= worst.b;
    const bool at_rounding_floor = worst.err <= 50.0 * kEps * worst.resabs * 1.0001;
    if (too_narrow || at_rounding_floor) break;
    if (subdivisions >= spec.max_subdivisions) {
      throw Error(ErrorKind::NonConvergence,
                  "adaptive quadrature hit " + std::to_string(spec.max_subdivisions) +
                      " subdivisions with error estimate " + std::to_string(total_err));
    }
    heap.pop();
    const Segment left = kronrod15(f, pieces, worst.piece, worst.a, mid);
    const Segment right = kronrod15(f, pieces, worst.piece, mid, worst.b);
    evaluations += 30;
    ++subdivisions;
    total += left.value + right.value - worst.value;
    total_err += left.err + right.err - worst.err;
    heap.push(left);
    heap.push(right);
  }

  // Resum from the leaves to shed drift from the incremental updates.
  std::vector<Segment> leaves;
  leaves.reserve(heap.size());
  while (!heap.empty()) {
    leaves.push_back(heap.top());
    heap.pop();
  }
  std::sort(leaves.begin(), leaves.end(), [](const Segment& l, const Segment& r) {
    return l.piece != r.piece ? l.piece < r.piece : l.a < r.a;
  });
  std::vector<EstimatedReal> by_piece(pieces.size());
  for (const Segment& s : leaves) {
    by_piece[s.piece].value += s.value;
    by_piece[s.piece].err_estimate += s.err;
  }
  // Bisection gave up short of the tolerance: retry the offending pieces.
  if (total_err > tolerance()) {
    const double share = tolerance() / static_cast<double>(pieces.size());
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (by_piece[i].err_estimate <= share) continue;
      const double rel = std::max(spec.rel_tol, share / std::max(1.0, std::abs(by_piece[i].value)));
      auto de = double_exponential(f, pieces[i], rel);
      if (de && de->err_estimate < by_piece[i].err_estimate) {
        by_piece[i] = *de;
      }
    }
  }
  double value = 0.0;
  double err = 0.0;
  for (const EstimatedReal& r : by_piece) {
    value += r.value;
    err += r.err_estimate;
  }
  return {value, err, evaluations};
}

EstimatedReal integrate_fixed(const RealFunction& f, Interval domain, int panels, int order) {
  domain.validate();
  if (!domain.is_finite()) {
    throw Error(ErrorKind::InvalidParams, "fixed-rule integration needs a finite interval");
  }
  if (panels < 1 || order < 2) {
    throw Error(ErrorKind::InvalidParams, "fixed rule needs panels >= 1 and order >= 2");
  }
  long evaluations = 0;
  const double fine = composite_legendre(f, domain, panels, order, evaluations);
  double err = 64.0 * kEps * std::abs(fine);
  if (panels >= 2) {
    const double coarse = composite_legendre(f, domain, panels / 2, order, evaluations);
    err += std::abs(fine - coarse);
  }
  return {fine, err, evaluations};
}

const QuadratureRule& hermite_rule(int nodes) {
  if (nodes < 1) throw Error(ErrorKind::InvalidParams, "Gauss-Hermite rule needs >= 1 node");
  return cached_rule(nodes, false);
}

const QuadratureRule& legendre_rule(int order) {
  if (order < 1) throw Error(ErrorKind::InvalidParams, "Gauss-Legendre rule needs >= 1 node");
  return cached_rule(order, true);
}

EstimatedReal gauss_hermite_expectation(const RealFunction& g, double mean, double sd,
                                        const QuadratureSpec& spec) {
  spec.validate();
  if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean)) {
    throw Error(ErrorKind::InvalidParams, "Gauss-Hermite expectation needs finite mean and sd > 0");
  }
  auto apply = [&](const QuadratureRule& rule, double& abs_sum) {
    std::vector<double> values(rule.nodes.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double t = mean + sd * rule.nodes[i];
      values[i] = check_finite(g(t), t);
    }
    abs_sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) abs_sum += rule.weights[i] * std::abs(values[i]);
    return kernels::dot(rule.weights, values);
  };
  const int n = spec.hermite_nodes;
  double abs_full = 0.0;
  double abs_half = 0.0;
  const double full = apply(hermite_rule(n), abs_full);
  const double half = apply(hermite_rule(std::max(1, n / 2)), abs_half);
  const double err = std::abs(full - half) + 64.0 * kEps * abs_full;
  return {full, err, static_cast<long>(n + std::max(1, n / 2))};
}

EstimatedReal differentiate(const RealFunction& f, double at, const DiffSpec& spec,
                            std::optional<Interval> domain) {
  spec.validate();
  const int levels = spec.richardson_levels;
  const int rows = std::max(levels, 1) + 1;
  // h is the finest rung; the ladder climbs to h*2^(rows-1)
  double h = spec.base_step * std::max(1.0, std::abs(at));
  long evaluations = 0;

  auto eval = [&](double t) {
    ++evaluations;
    const double v = f(t);
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::NonFiniteEvaluation,
                  "function returned " + std::to_string(v) + " at " + std::to_string(t));
    }
    return v;
  };

  // 0 = central, +1 = forward, -1 = backward
  int direction = 0;
  bool found = !domain.has_value();
  for (int shrink = 0; shrink < 40 && !found; ++shrink) {
    const double reach = std::ldexp(h, rows - 1);
    if (domain->contains(at - reach) && domain->contains(at + reach)) {
      direction = 0;
      found = true;
    } else if (domain->contains_closed(at) && domain->contains(at + reach)) {
      direction = 1;
      found = true;
    } else if (domain->contains_closed(at) && domain->contains(at - reach)) {
      direction = -1;
      found = true;
    } else {
      h *= 0.5;
    }
  }
  if (!found) {
    throw Error(ErrorKind::StepUnderflow,
                "no difference stencil around " + std::to_string(at) + " fits the domain");
  }

  std::vector<double> table(static_cast<std::size_t>(rows) * rows, 0.0);
  auto cell = [&](int i, int j) -> double& { return table[static_cast<std::size_t>(i) * rows + j]; };

  double f_at = 0.0;
  if (direction != 0) f_at = eval(at);
  double max_abs_f = std::abs(f_at);
  const double ratio = direction == 0 ? 4.0 : 2.0;
  for (int i = 0; i < rows; ++i) {
    const double step = std::ldexp(h, rows - 1 - i);
    if (direction == 0) {
      const double fp = eval(at + step);
      const double fm = eval(at - step);
      max_abs_f = std::max({max_abs_f, std::abs(fp), std::abs(fm)});
      cell(i, 0) = (fp - fm) / (2.0 * step);
    } else {
      const double fs = eval(at + direction * step);
      max_abs_f = std::max(max_abs_f, std::abs(fs));
      cell(i, 0) = direction * (fs - f_at) / step;
    }
    double factor = ratio;
    for (int j = 1; j <= i; ++j, factor *= ratio) {
      cell(i, j) = cell(i, j - 1) + (cell(i, j - 1) - cell(i - 1, j - 1)) / (factor - 1.0);
    }
  }
  const double rounding = 4.0 * kEps * max_abs_f / h;
  if (levels == 0) {
    return {cell(0, 0), std::abs(cell(0, 0) - cell(1, 0)) + rounding, evaluations};
  }
  const double best = cell(levels, levels);
  const double err = std::abs(best - cell(levels, levels - 1)) + rounding;
  return {best, err, evaluations};
}

EstimatedReal mixed_partial(const BivariateFunction& f, double at_x, double at_y,
                            const DiffSpec& spec, std::optional<StencilSteps> steps) {
  spec.validate();
  // second differences lose two orders to rounding, so the default rung is
  // base_step^(3/4) (eps^(1/4) at the default base_step)
  const double base = std::pow(spec.base_step, 0.75);
  double hx = steps ? steps->x : base * std::max(1.0, std::abs(at_x));
  double hy = steps ? steps->y : base * std::max(1.0, std::abs(at_y));
  if (!(hx > 0.0) || !(hy > 0.0)) {
    throw Error(ErrorKind::InvalidParams, "mixed_partial steps must be positive");
  }
  long evaluations = 0;
  double max_abs_log = 0.0;
  auto log_f = [&](double x, double y) {
    ++evaluations;
    const double v = f(x, y);
    if (std::isnan(v) || std::isinf(v)) {
      throw Error(ErrorKind::NonFiniteEvaluation, "density returned " + std::to_string(v) +
                                                      " at (" + std::to_string(x) + ", " +
                                                      std::to_string(y) + ")");
    }
    if (!(v > 0.0)) {
      throw Error(ErrorKind::NonPositiveDensity, "density is " + std::to_string(v) + " at (" +
                                                     std::to_string(x) + ", " +
                                                     std::to_string(y) + ")");
    }
    const double l = std::log(v);
    max_abs_log = std::max(max_abs_log, std::abs(l));
    return l;
  };

  const int levels = spec.richardson_levels;
  const int rows = std::max(levels, 1) + 1;
  std::vector<double> table(static_cast<std::size_t>(rows) * rows, 0.0);
  auto cell = [&](int i, int j) -> double& { return table[static_cast<std::size_t>(i) * rows + j]; };
  for (int i = 0; i < rows; ++i) {
    const double sx = std::ldexp(hx, rows - 1 - i);
    const double sy = std::ldexp(hy, rows - 1 - i);
    const double diagonal = log_f(at_x + sx, at_y + sy) + log_f(at_x - sx, at_y - sy);
    const double anti = log_f(at_x + sx, at_y - sy) + log_f(at_x - sx, at_y + sy);
    cell(i, 0) = (diagonal - anti) / (4.0 * sx * sy);
    double factor = 4.0;
    for (int j = 1; j <= i; ++j, factor *= 4.0) {
      cell(i, j) = cell(i, j - 1) + (cell(i, j - 1) - cell(i - 1, j - 1)) / (factor - 1.0);
    }
  }
  const double smallest = hx * hy;
  const double rounding = 8.0 * kEps * std::max(1.0, max_abs_log) / smallest;
  if (levels == 0) {
    return {cell(0, 0), std::abs(cell(0, 0) - cell(1, 0)) + rounding, evaluations};
  }
  const double best = cell(levels, levels);
  return {best, std::abs(best - cell(levels, levels - 1)) + rounding, evaluations};
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace collapse
