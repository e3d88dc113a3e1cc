#pragma once

#include "citest/kernels.hpp"

// Internal declarations of the per-backend kernel variants. Each backend
// lives in its own translation unit so it can be compiled with the matching
// target flags; the dispatcher in kernels.cpp picks one table at startup.

namespace citest::kernels {

#if defined(CITEST_KERNELS_AVX2_TU)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double weighted_sumsq(const double* w, const double* r, std::size_t n);
double residual_dot(const double* x, const double* mu, const double* w,
                    std::size_t n);
double dot3(const double* a, const double* b, const double* c, std::size_t n);
ProductMoments product_moments(const double* a, const double* b,
                               std::size_t n);
}  // namespace avx2
#endif

#if defined(CITEST_KERNELS_NEON_TU)
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double weighted_sumsq(const double* w, const double* r, std::size_t n);
double residual_dot(const double* x, const double* mu, const double* w,
                    std::size_t n);
double dot3(const double* a, const double* b, const double* c, std::size_t n);
ProductMoments product_moments(const double* a, const double* b,
                               std::size_t n);
}  // namespace neon
#endif

}  // namespace citest::kernels
