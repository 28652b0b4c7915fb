// Scalar reference kernels. Plain sequential loops; these define the
// expected results for the vectorized variants.

#include "kernels_impl.hpp"

namespace collapse::kernels::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot3_scalar(const double* a, const double* b, const double* c, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i] * c[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double sum_sq_dev_scalar(const double* a, std::size_t n, double center) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - center;
    acc += d * d;
  }
  return acc;
}

}  // namespace

const KernelTable scalar_table{dot_scalar, dot3_scalar, axpy_scalar, sum_scalar, sum_sq_dev_scalar};

}  // namespace collapse::kernels::detail
