#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>
#include <cmath>
#include <string>

#include "collapse/errors.hpp"
#include "collapse/numerics.hpp"

namespace collapse::detail {

/// A step around `at` no larger than base*max(1,|at|), and small enough that
/// the coarsest Richardson rung (4x with two levels) stays well inside
/// `bounds`.
inline double local_step(double at, Interval bounds, double base) {
  double h = base * std::max(1.0, std::abs(at));
  double room = kInf;
  if (std::isfinite(bounds.lower)) room = std::min(room, at - bounds.lower);
  if (std::isfinite(bounds.upper)) room = std::min(room, bounds.upper - at);
  if (room > 0.0 && std::isfinite(room)) h = std::min(h, room / 16.0);
  return h;
}

/// DiffSpec whose first rung at `at` is exactly h.
inline DiffSpec spec_for_step(const DiffSpec& base, double at, double h) {
  DiffSpec s = base;
  s.base_step = h / std::max(1.0, std::abs(at));
  return s;
}

/// Runs fn(scale) with scale = 1, 1/4, 1/16, ... while it fails because a
/// stencil node fell outside the positive part of a density.
template <class Fn>
auto with_shrinking_steps(Fn&& fn, int attempts = 4) {
  double scale = 1.0;
  for (int i = 0;; ++i, scale *= 0.25) {
    try {
      return fn(scale);
    } catch (const Error& e) {
      const bool retry = e.kind() == ErrorKind::NonPositiveDensity ||
                         e.kind() == ErrorKind::NonFiniteEvaluation;
      if (!retry || i + 1 >= attempts) throw;
    }
  }
}

/// Covariate density below which a w-integrand that cannot be evaluated
/// (a density underflowing far in the tail) is taken as zero.
inline constexpr double kNegligibleWeight = 1e-200;

/// Rough probability of the stretch between w and the nearest finite edge of
/// the support; below this a failed integrand point is dropped too, which
/// covers densities that blow up at an edge (gamma with shape < 1).
inline constexpr double kNegligibleEdgeMass = 1e-100;

inline bool negligible_weight(double density, double w, Interval support) {
  if (density < kNegligibleWeight) return true;
  double edge = INFINITY;
  if (std::isfinite(support.lower)) edge = std::min(edge, w - support.lower);
  if (std::isfinite(support.upper)) edge = std::min(edge, support.upper - w);
  if (!(edge > 0.0)) return true;
  return std::isfinite(edge) && density * edge < kNegligibleEdgeMass;
}

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

/// Calls fn(i) for i in [0, n) on up to `threads` workers (0: hardware
/// count). The first exception in index order is rethrown after all finish.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(threads > 0 ? threads : hw, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace collapse::detail
