#include <cmath>
#include <random>
#include <vector>

#include "collapse/errors.hpp"
#include "collapse/kernels.hpp"
#include "doctest.h"

using namespace collapse;
using namespace collapse::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> v(n);
  for (auto& e : v) e = u(rng);
  return v;
}

double abs_sum3(const std::vector<double>& a, const std::vector<double>& b,
                const std::vector<double>& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i] * c[i]);
  return s;
}

}  // namespace

TEST_CASE("scalar kernels match hand-computed values") {
  const KernelTable& t = table_for(Backend::Scalar);
  std::vector<double> a{1, 2, 3, 4, 5};
  std::vector<double> b{2, 2, 2, 2, 2};
  std::vector<double> c{1, 0, 1, 0, 1};
  CHECK(t.dot(a.data(), b.data(), a.size()) == 30.0);
  CHECK(t.dot3(a.data(), b.data(), c.data(), a.size()) == 18.0);
  CHECK(t.sum(a.data(), a.size()) == 15.0);
  CHECK(t.sum_sq_dev(a.data(), a.size(), 3.0) == 10.0);
  std::vector<double> y = b;
  t.axpy(2.0, a.data(), y.data(), a.size());
  CHECK(y == std::vector<double>{4, 6, 8, 10, 12});
}

TEST_CASE("every available backend agrees with the scalar reference") {
  std::mt19937_64 rng(7);
  const KernelTable& ref = table_for(Backend::Scalar);
  for (Backend backend : available_backends()) {
    CAPTURE(to_string(backend));
    const KernelTable& t = table_for(backend);
    // lengths straddling every tail case of 4- and 8-wide unrolling
    for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 33u, 100u, 1001u}) {
      CAPTURE(n);
      auto a = random_vector(n, rng);
      auto b = random_vector(n, rng);
      auto c = random_vector(n, rng);
      const double scale = abs_sum3(a, b, c) + 1.0;
      const double eps = 64 * std::numeric_limits<double>::epsilon();

      CHECK(std::abs(t.dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <=
            eps * (n + 1) * 9.0);
      CHECK(std::abs(t.dot3(a.data(), b.data(), c.data(), n) -
                     ref.dot3(a.data(), b.data(), c.data(), n)) <= eps * scale);
      CHECK(std::abs(t.sum(a.data(), n) - ref.sum(a.data(), n)) <= eps * (n + 1) * 3.0);
      CHECK(std::abs(t.sum_sq_dev(a.data(), n, 0.25) - ref.sum_sq_dev(a.data(), n, 0.25)) <=
            eps * (n + 1) * 16.0);

      auto y1 = b;
      auto y2 = b;
      t.axpy(-1.5, a.data(), y1.data(), n);
      ref.axpy(-1.5, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("free functions route through the selected backend") {
  std::vector<double> a{1.0, 2.0, 3.0};
  for (Backend backend : available_backends()) {
    ScopedBackend scope(backend);
    CHECK(active_backend() == backend);
    CHECK(dot(a, a) == 14.0);
    CHECK(sum(a) == 6.0);
  }
}

TEST_CASE("scoped override restores the previous backend") {
  const Backend before = active_backend();
  {
    ScopedBackend scope(Backend::Scalar);
    CHECK(active_backend() == Backend::Scalar);
  }
  CHECK(active_backend() == before);
}

TEST_CASE("mismatched operand lengths are rejected") {
  std::vector<double> a{1.0, 2.0};
  std::vector<double> b{1.0};
  CHECK_THROWS_AS(dot(a, b), Error);
  try {
    dot(a, b);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidParams);
  }
}

TEST_CASE("selecting an unavailable backend throws") {
  for (Backend b : {Backend::Avx2, Backend::Neon}) {
    if (!backend_available(b)) CHECK_THROWS_AS(select_backend(b), Error);
  }
}
