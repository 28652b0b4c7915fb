#pragma once

// Data-parallel reductions used by the quadrature rules, the regression
// fitters and the Monte Carlo estimators. Each kernel has a scalar reference
// implementation and vectorized variants (AVX2+FMA on x86-64, NEON on
// aarch64). The variant is picked once at startup from the CPU features and
// can be overridden for testing.
//
// Vector variants accumulate in several lanes, so their reductions differ
// from the scalar sequential sum by rounding only.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace collapse::kernels {

enum class Backend { Scalar, Avx2, Neon };

std::string_view to_string(Backend backend);

/// Backends compiled into this build and supported by the running CPU.
std::vector<Backend> available_backends();
bool backend_available(Backend backend);

/// The backend used by the free functions below.
Backend active_backend();

/// Throws Error(InvalidParams) if the backend is not available.
void select_backend(Backend backend);

/// Restores the automatically detected backend.
void reset_backend();

/// RAII override, used by the equivalence tests.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend);
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

/// sum_i a[i]*b[i]
double dot(std::span<const double> a, std::span<const double> b);

/// sum_i a[i]*b[i]*c[i]; the weighted inner product behind X'WX and X'Wz.
double dot3(std::span<const double> a, std::span<const double> b, std::span<const double> c);

/// y[i] += alpha*x[i]
void axpy(double alpha, std::span<const double> x, std::span<double> y);

double sum(std::span<const double> a);

/// sum_i (a[i]-center)^2
double sum_sq_dev(std::span<const double> a, double center);

/// The per-backend function table. Exposed so tests can call a specific
/// variant without touching the global selection.
struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*dot3)(const double*, const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*sum_sq_dev)(const double*, std::size_t, double);
};

const KernelTable& table_for(Backend backend);

}  // namespace collapse::kernels
