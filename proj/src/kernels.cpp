#include "citest/kernels.hpp"

#include "kernels_impl.hpp"

namespace citest::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc0 = 0.0, acc1 = 0.0;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
  }
  if (i < n) acc0 += a[i] * b[i];
  return acc0 + acc1;
}

double sum(const double* a, std::size_t n) {
  double acc0 = 0.0, acc1 = 0.0;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    acc0 += a[i];
    acc1 += a[i + 1];
  }
  if (i < n) acc0 += a[i];
  return acc0 + acc1;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double weighted_sumsq(const double* w, const double* r, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += w[i] * r[i] * r[i];
  return acc;
}

double residual_dot(const double* x, const double* mu, const double* w,
                    std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (x[i] - mu[i]) * w[i];
  return acc;
}

double dot3(const double* a, const double* b, const double* c, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i] * c[i];
  return acc;
}

ProductMoments product_moments(const double* a, const double* b,
                               std::size_t n) {
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = a[i] * b[i];
    s += p;
    s2 += p * p;
  }
  return {s, s2};
}

}  // namespace scalar

namespace {

struct KernelTable {
  const char* name;
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*weighted_sumsq)(const double*, const double*, std::size_t);
  double (*residual_dot)(const double*, const double*, const double*,
                         std::size_t);
  double (*dot3)(const double*, const double*, const double*, std::size_t);
  ProductMoments (*product_moments)(const double*, const double*, std::size_t);
};

constexpr KernelTable kScalarTable = {
    "scalar",       scalar::dot,          scalar::sum,
    scalar::axpy,   scalar::weighted_sumsq, scalar::residual_dot,
    scalar::dot3,   scalar::product_moments,
};

KernelTable detect_backend() {
#if defined(CITEST_KERNELS_AVX2_TU)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return {"avx2",       avx2::dot,          avx2::sum,
            avx2::axpy,   avx2::weighted_sumsq, avx2::residual_dot,
            avx2::dot3,   avx2::product_moments};
  }
#endif
#if defined(CITEST_KERNELS_NEON_TU)
  return {"neon",       neon::dot,          neon::sum,
          neon::axpy,   neon::weighted_sumsq, neon::residual_dot,
          neon::dot3,   neon::product_moments};
#endif
  return kScalarTable;
}

const KernelTable& table() {
  static const KernelTable t = detect_backend();
  return t;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  return table().dot(a, b, n);
}

double sum(const double* a, std::size_t n) { return table().sum(a, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table().axpy(alpha, x, y, n);
}

double weighted_sumsq(const double* w, const double* r, std::size_t n) {
  return table().weighted_sumsq(w, r, n);
}

double residual_dot(const double* x, const double* mu, const double* w,
                    std::size_t n) {
  return table().residual_dot(x, mu, w, n);
}

double dot3(const double* a, const double* b, const double* c, std::size_t n) {
  return table().dot3(a, b, c, n);
}

ProductMoments product_moments(const double* a, const double* b,
                               std::size_t n) {
  return table().product_moments(a, b, n);
}

const char* backend_name() { return table().name; }

}  // namespace citest::kernels
