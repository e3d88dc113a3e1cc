#include <arm_neon.h>

#include "kernels_impl.hpp"

// NEON variants, 2 doubles per lane. aarch64 makes NEON baseline so no
// runtime feature probe is needed beyond being on this architecture.

namespace citest::kernels::neon {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double r = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum(const double* a, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
  double r = vaddvq_f64(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double weighted_sumsq(const double* w, const double* r, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t rv = vld1q_f64(r + i);
    acc = vfmaq_f64(acc, vmulq_f64(vld1q_f64(w + i), rv), rv);
  }
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) out += w[i] * r[i] * r[i];
  return out;
}

double residual_dot(const double* x, const double* mu, const double* w,
                    std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(x + i), vld1q_f64(mu + i));
    acc = vfmaq_f64(acc, d, vld1q_f64(w + i));
  }
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) out += (x[i] - mu[i]) * w[i];
  return out;
}

double dot3(const double* a, const double* b, const double* c,
            std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t ab = vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = vfmaq_f64(acc, ab, vld1q_f64(c + i));
  }
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) out += a[i] * b[i] * c[i];
  return out;
}

ProductMoments product_moments(const double* a, const double* b,
                               std::size_t n) {
  float64x2_t acc_s = vdupq_n_f64(0.0);
  float64x2_t acc_s2 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t p = vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc_s = vaddq_f64(acc_s, p);
    acc_s2 = vfmaq_f64(acc_s2, p, p);
  }
  double s = vaddvq_f64(acc_s);
  double s2 = vaddvq_f64(acc_s2);
  for (; i < n; ++i) {
    const double p = a[i] * b[i];
    s += p;
    s2 += p * p;
  }
  return {s, s2};
}

}  // namespace citest::kernels::neon
