#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <vector>

#include "citest/kernels.hpp"
#include "doctest.h"

using namespace citest;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n,
                               double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = gauss(rng);
  return v;
}

}  // namespace

// The dispatched backend must agree with the scalar reference on every
// operation, for lengths that cover all remainder paths.
TEST_CASE("simd backend matches scalar reference") {
  std::mt19937_64 rng(12345);
  INFO("active backend: ", kernels::backend_name());
  for (std::size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 63, 64, 100,
                        1000, 1001}) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n, 2.0);
    const auto w = random_vec(rng, n, 0.5);
    const double tol = 1e-12 * (static_cast<double>(n) + 1.0);

    CHECK(kernels::dot(a.data(), b.data(), n) ==
          doctest::Approx(kernels::scalar::dot(a.data(), b.data(), n))
              .epsilon(tol));
    CHECK(kernels::sum(a.data(), n) ==
          doctest::Approx(kernels::scalar::sum(a.data(), n)).epsilon(tol));
    CHECK(kernels::weighted_sumsq(w.data(), b.data(), n) ==
          doctest::Approx(
              kernels::scalar::weighted_sumsq(w.data(), b.data(), n))
              .epsilon(tol));
    CHECK(kernels::residual_dot(a.data(), b.data(), w.data(), n) ==
          doctest::Approx(
              kernels::scalar::residual_dot(a.data(), b.data(), w.data(), n))
              .epsilon(tol));
    CHECK(kernels::dot3(a.data(), b.data(), w.data(), n) ==
          doctest::Approx(
              kernels::scalar::dot3(a.data(), b.data(), w.data(), n))
              .epsilon(tol));

    const auto pm = kernels::product_moments(a.data(), b.data(), n);
    const auto pms = kernels::scalar::product_moments(a.data(), b.data(), n);
    CHECK(pm.sum == doctest::Approx(pms.sum).epsilon(tol));
    CHECK(pm.sum_sq == doctest::Approx(pms.sum_sq).epsilon(tol));

    auto y1 = random_vec(rng, n);
    auto y2 = y1;
    kernels::axpy(1.7, a.data(), y1.data(), n);
    kernels::scalar::axpy(1.7, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
  }
}

TEST_CASE("kernel reference values") {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  const std::vector<double> b = {4.0, -5.0, 6.0};
  CHECK(kernels::dot(a.data(), b.data(), 3) == doctest::Approx(12.0));
  CHECK(kernels::sum(a.data(), 3) == doctest::Approx(6.0));
  CHECK(kernels::weighted_sumsq(a.data(), b.data(), 3) ==
        doctest::Approx(16.0 + 50.0 + 108.0));
  CHECK(kernels::residual_dot(a.data(), b.data(), a.data(), 3) ==
        doctest::Approx(-3.0 + 14.0 + (-9.0)));
  const auto pm = kernels::product_moments(a.data(), b.data(), 3);
  CHECK(pm.sum == doctest::Approx(4.0 - 10.0 + 18.0));
  CHECK(pm.sum_sq == doctest::Approx(16.0 + 100.0 + 324.0));
}
