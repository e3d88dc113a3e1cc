#pragma once

#include <cstddef>

// Vector kernels for the length-n inner loops (coordinate descent column
// updates, residual-product statistics, resampling dots). Each operation has
// a portable scalar reference implementation and, where the hardware allows,
// a SIMD variant (AVX2+FMA on x86-64, NEON on aarch64) selected once at
// startup. The dispatched entry points below are what library code calls;
// kernels::scalar is kept callable so equivalence tests can compare backends.

namespace citest::kernels {

// sum_i a[i] * b[i]
double dot(const double* a, const double* b, std::size_t n);

// sum_i a[i]
double sum(const double* a, std::size_t n);

// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);

// sum_i w[i] * r[i]^2
double weighted_sumsq(const double* w, const double* r, std::size_t n);

// sum_i (x[i] - mu[i]) * w[i]
double residual_dot(const double* x, const double* mu, const double* w,
                    std::size_t n);

// sum_i a[i] * b[i] * c[i]
double dot3(const double* a, const double* b, const double* c, std::size_t n);

// First two raw moments of the elementwise product a[i]*b[i].
struct ProductMoments {
  double sum;     // sum_i a[i]*b[i]
  double sum_sq;  // sum_i (a[i]*b[i])^2
};
ProductMoments product_moments(const double* a, const double* b,
                               std::size_t n);

// Name of the backend selected at startup ("avx2", "neon" or "scalar").
const char* backend_name();

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double weighted_sumsq(const double* w, const double* r, std::size_t n);
double residual_dot(const double* x, const double* mu, const double* w,
                    std::size_t n);
double dot3(const double* a, const double* b, const double* c, std::size_t n);
ProductMoments product_moments(const double* a, const double* b,
                               std::size_t n);
}  // namespace scalar

}  // namespace citest::kernels
