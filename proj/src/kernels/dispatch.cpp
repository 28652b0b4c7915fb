#include <atomic>
#include <string>

#include "collapse/errors.hpp"
#include "kernels_impl.hpp"

namespace collapse::kernels {
namespace {

bool cpu_supports(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(COLLAPSE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(COLLAPSE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect() {
  if (cpu_supports(Backend::Avx2)) return Backend::Avx2;
  if (cpu_supports(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

const KernelTable& active_table() { return table_for(current().load(std::memory_order_relaxed)); }

void require_same_size(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorKind::InvalidParams,
                "kernel operands differ in length (" + std::to_string(a) + " vs " +
                    std::to_string(b) + ")");
  }
}

}  // namespace

std::string_view to_string(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
    if (cpu_supports(b)) out.push_back(b);
  }
  return out;
}

bool backend_available(Backend backend) { return cpu_supports(backend); }

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void select_backend(Backend backend) {
  if (!cpu_supports(backend)) {
    throw Error(ErrorKind::InvalidParams,
                "kernel backend '" + std::string(to_string(backend)) + "' is not available");
  }
  current().store(backend, std::memory_order_relaxed);
}

void reset_backend() { current().store(detect(), std::memory_order_relaxed); }

ScopedBackend::ScopedBackend(Backend backend) : previous_(active_backend()) {
  select_backend(backend);
}

ScopedBackend::~ScopedBackend() { current().store(previous_, std::memory_order_relaxed); }

const KernelTable& table_for(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return detail::scalar_table;
    case Backend::Avx2:
#if defined(COLLAPSE_HAVE_AVX2)
      return detail::avx2_table;
#else
      break;
#endif
    case Backend::Neon:
#if defined(COLLAPSE_HAVE_NEON)
      return detail::neon_table;
#else
      break;
#endif
  }
  throw Error(ErrorKind::InvalidParams,
              "kernel backend '" + std::string(to_string(backend)) + "' is not compiled in");
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size());
  return active_table().dot(a.data(), b.data(), a.size());
}

double dot3(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
  require_same_size(a.size(), b.size());
  require_same_size(a.size(), c.size());
  return active_table().dot3(a.data(), b.data(), c.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_size(x.size(), y.size());
  active_table().axpy(alpha, x.data(), y.data(), x.size());
}

double sum(std::span<const double> a) { return active_table().sum(a.data(), a.size()); }

double sum_sq_dev(std::span<const double> a, double center) {
  return active_table().sum_sq_dev(a.data(), a.size(), center);
}

}  // namespace collapse::kernels
