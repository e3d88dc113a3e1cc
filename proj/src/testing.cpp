#include "citest/testing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "citest/errors.hpp"
#include "citest/kernels.hpp"

namespace citest {

namespace {
constexpr double kNormalizerFloor = 1e-12;
}

nlohmann::json TestResult::to_json() const {
  return {{"method", method},       {"statistic", statistic},
          {"p_value", p_value},     {"reject", reject},
          {"alpha", alpha},         {"diagnostics", diagnostics}};
}

double std_normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

// Acklam's rational approximation polished by one Newton step.
double std_normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0))
    throw InvalidInputError("std_normal_quantile: prob must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double q, r, x;
  if (prob < p_low) {
    q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - p_low) {
    q = prob - 0.5;
    r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = std_normal_cdf(x) - prob;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return x - e / pdf;
}

double product_residual_statistic(const Eigen::VectorXd& rx,
                                  const Eigen::VectorXd& ry) {
  if (rx.size() != ry.size() || rx.size() < 1)
    throw InvalidInputError("product statistic needs equal nonempty vectors");
  const auto n = static_cast<std::size_t>(rx.size());
  return kernels::dot(rx.data(), ry.data(), n) /
         std::sqrt(static_cast<double>(n));
}

double gcm_normalizer(const Eigen::VectorXd& rx, const Eigen::VectorXd& ry) {
  if (rx.size() != ry.size() || rx.size() < 2)
    throw InvalidInputError("gcm_normalizer needs equal vectors with n >= 2");
  const auto n = static_cast<std::size_t>(rx.size());
  const auto pm = kernels::product_moments(rx.data(), ry.data(), n);
  const double mean = pm.sum / static_cast<double>(n);
  const double var = pm.sum_sq / static_cast<double>(n) - mean * mean;
  const double s = std::sqrt(std::max(var, 0.0));
  if (s < kNormalizerFloor)
    throw DegenerateVarianceError(
        "empirical variance of product-of-residual summands is degenerate");
  return s;
}

namespace {

struct GcmParts {
  double t_unnorm;     // product statistic
  double normalizer;   // S_gcm
  double statistic;    // t_unnorm / normalizer
};

GcmParts gcm_parts(const Eigen::VectorXd& rx, const Eigen::VectorXd& ry) {
  GcmParts g;
  g.t_unnorm = product_residual_statistic(rx, ry);
  g.normalizer = gcm_normalizer(rx, ry);
  g.statistic = g.t_unnorm / g.normalizer;
  return g;
}

void apply_sidedness(TestResult& res, Sidedness sides) {
  if (sides == Sidedness::one_sided) {
    res.p_value = 1.0 - std_normal_cdf(res.statistic);
    res.reject = res.statistic > std_normal_quantile(1.0 - res.alpha);
  } else {
    res.p_value = 2.0 * (1.0 - std_normal_cdf(std::abs(res.statistic)));
    res.reject = res.p_value <= res.alpha;
  }
}

}  // namespace

TestResult gcm_test(const Dataset& data, const MeanModel& mx,
                    const MeanModel& my, double alpha, Sidedness sides,
                    const GroundTruth* truth) {
  data.validate();
  const Eigen::VectorXd rx = data.x - mx.predict(data.z);
  const Eigen::VectorXd ry = data.y - my.predict(data.z);
  const GcmParts g = gcm_parts(rx, ry);
  TestResult res;
  res.method = "gcm";
  res.alpha = alpha;
  res.statistic = g.statistic;
  apply_sidedness(res, sides);
  res.diagnostics["product_statistic"] = g.t_unnorm;
  res.diagnostics["normalizer"] = g.normalizer;
  res.diagnostics["two_sided"] = (sides == Sidedness::two_sided);
  if (truth != nullptr) {
    CondLawX law;
    law.mean = mx;
    law.variance = VarianceEstimator::residual_squared();
    const ErrorMetrics em = error_metrics(data, *truth, mx, my, law);
    res.diagnostics["error_metrics"] = {{"e_nx", em.e_nx},
                                        {"e_nx_prime", em.e_nx_prime},
                                        {"e_ny", em.e_ny},
                                        {"e_ny_prime", em.e_ny_prime},
                                        {"e_ny_prime_hat", em.e_ny_prime_hat}};
  }
  return res;
}

TestResult marginal_gcm(const Dataset& data, double alpha, Sidedness sides) {
  TestResult res = gcm_test(data, fit_intercept_only(data.x, Family::gaussian),
                            fit_intercept_only(data.y, data.family), alpha,
                            sides, nullptr);
  res.method = "gcm-marginal";
  return res;
}

double dcrt_conditional_variance(const CondLawX& law_x, const Dataset& data,
                                 const MeanModel& my) {
  const Eigen::VectorXd mu_x = law_x.mean.predict(data.z);
  const Eigen::VectorXd var_x =
      variance_of_x_given_z(law_x.variance, data.x, mu_x);
  const Eigen::VectorXd ry = data.y - my.predict(data.z);
  const auto n = static_cast<std::size_t>(data.n());
  return std::max(kernels::weighted_sumsq(var_x.data(), ry.data(), n) /
                      static_cast<double>(data.n()),
                  kVarianceFloor);
}

Eigen::VectorXd resample_x(const CondLawX& law_x, const Eigen::VectorXd& mu_x,
                           const Eigen::VectorXd& var_x, Rng& rng) {
  const Eigen::Index n = mu_x.size();
  Eigen::VectorXd out(n);
  if (law_x.sampler == SamplerKind::bernoulli) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i)
      out[i] = unif(rng) < mu_x[i] ? 1.0 : 0.0;
  } else {
    fill_std_normal(rng, out.data(), static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      out[i] = mu_x[i] + std::sqrt(var_x[i]) * out[i];
  }
  return out;
}

namespace {

void check_bernoulli_means(const CondLawX& law_x, const Eigen::VectorXd& mu) {
  if (law_x.sampler != SamplerKind::bernoulli) return;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(mu[i] > 0.0 && mu[i] < 1.0))
      throw InvalidInputError(
          "bernoulli sampler requires mean predictions in (0,1)");
  }
}

// delta = 1 Lyapunov ratio of the resampling distribution, diagnostics only.
double lyapunov_ratio(const CondLawX& law_x, const Eigen::VectorXd& mu_x,
                      const Eigen::VectorXd& var_x, const Eigen::VectorXd& ry,
                      double s2_dcrt) {
  const Eigen::Index n = ry.size();
  double acc = 0.0;
  const double abs_moment_gauss = 2.0 * std::sqrt(2.0 / M_PI);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m3;
    if (law_x.sampler == SamplerKind::bernoulli) {
      const double m = mu_x[i];
      m3 = m * (1.0 - m) * ((1.0 - m) * (1.0 - m) + m * m);
    } else {
      m3 = std::pow(var_x[i], 1.5) * abs_moment_gauss;
    }
    acc += std::pow(std::abs(ry[i]), 3.0) * m3;
  }
  const double denom =
      std::pow(static_cast<double>(n), 1.5) * std::pow(s2_dcrt, 1.5);
  return acc / denom;
}

}  // namespace

TestResult dcrt_hat(const Dataset& data, const CondLawX& law_x,
                    const MeanModel& my, int M, double alpha, Rng& rng,
                    Sidedness sides) {
  if (M < 1) throw InvalidInputError("dcrt_hat needs M >= 1");
  data.validate();
  const int n = data.n();
  const Eigen::VectorXd mu_x = law_x.mean.predict(data.z);
  check_bernoulli_means(law_x, mu_x);
  const Eigen::VectorXd var_x =
      variance_of_x_given_z(law_x.variance, data.x, mu_x);
  const Eigen::VectorXd ry = data.y - my.predict(data.z);
  const Eigen::VectorXd rx = data.x - mu_x;
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double t_obs = product_residual_statistic(rx, ry);

  const auto un = static_cast<std::size_t>(n);
  std::vector<double> stats(M);
  if (law_x.sampler == SamplerKind::gaussian) {
    // (xt_i - mu_i) = sd_i * g_i, so each resample statistic is a single
    // three-way dot against fresh standard normals
    Eigen::VectorXd sdry(n), g(n);
    for (int i = 0; i < n; ++i) sdry[i] = std::sqrt(var_x[i]) * ry[i];
    for (int m = 0; m < M; ++m) {
      fill_std_normal(rng, g.data(), un);
      stats[m] = kernels::dot(sdry.data(), g.data(), un) / sqrt_n;
    }
  } else {
    for (int m = 0; m < M; ++m) {
      const Eigen::VectorXd xt = resample_x(law_x, mu_x, var_x, rng);
      stats[m] =
          kernels::residual_dot(xt.data(), mu_x.data(), ry.data(), un) / sqrt_n;
    }
  }

  int count = 0;
  if (sides == Sidedness::one_sided) {
    for (double t : stats)
      if (t >= t_obs) ++count;
  } else {
    const double a = std::abs(t_obs);
    for (double t : stats)
      if (std::abs(t) >= a) ++count;
  }

  TestResult res;
  res.method = "dcrt-hat";
  res.alpha = alpha;
  res.statistic = t_obs;
  res.p_value = static_cast<double>(1 + count) / (M + 1);
  res.reject = res.p_value <= alpha;
  const double s2 =
      std::max(kernels::weighted_sumsq(var_x.data(), ry.data(), un) /
                   static_cast<double>(n),
               kVarianceFloor);
  res.diagnostics["s2_dcrt"] = s2;
  res.diagnostics["lyapunov_ratio"] =
      lyapunov_ratio(law_x, mu_x, var_x, ry, s2);
  res.diagnostics["two_sided"] = (sides == Sidedness::two_sided);
  res.diagnostics["resample_statistics"] = stats;
  return res;
}

TestResult mx2_f_test(const Dataset& data, const CondLawX& law_x,
                      const MeanModel& my, double alpha) {
  data.validate();
  const Eigen::VectorXd mu_x = law_x.mean.predict(data.z);
  const Eigen::VectorXd var_x =
      variance_of_x_given_z(law_x.variance, data.x, mu_x);
  const Eigen::VectorXd ry = data.y - my.predict(data.z);
  const Eigen::VectorXd rx = data.x - mu_x;
  const double t_unnorm = product_residual_statistic(rx, ry);
  const auto un = static_cast<std::size_t>(data.n());
  const double s2 =
      std::max(kernels::weighted_sumsq(var_x.data(), ry.data(), un) /
                   static_cast<double>(data.n()),
               kVarianceFloor);
  TestResult res;
  res.method = "mx2-f";
  res.alpha = alpha;
  res.statistic = t_unnorm / std::sqrt(s2);
  res.p_value = 1.0 - std_normal_cdf(res.statistic);
  res.reject = res.statistic > std_normal_quantile(1.0 - alpha);
  res.diagnostics["s2_dcrt"] = s2;
  res.diagnostics["product_statistic"] = t_unnorm;
  return res;
}

TestResult ndcrt_hat(const Dataset& data, const CondLawX& law_x,
                     const MeanModel& my, int M, double alpha, Rng& rng) {
  if (M < 1) throw InvalidInputError("ndcrt_hat needs M >= 1");
  data.validate();
  const int n = data.n();
  const Eigen::VectorXd mu_x = law_x.mean.predict(data.z);
  check_bernoulli_means(law_x, mu_x);
  const Eigen::VectorXd var_x =
      variance_of_x_given_z(law_x.variance, data.x, mu_x);
  const Eigen::VectorXd ry = data.y - my.predict(data.z);
  const Eigen::VectorXd rx = data.x - mu_x;
  const GcmParts g = gcm_parts(rx, ry);

  const auto un = static_cast<std::size_t>(n);
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  std::vector<double> stats(M);
  int degenerate = 0;
  Eigen::VectorXd sdry(n), gvec(n);
  const bool gaussian = law_x.sampler == SamplerKind::gaussian;
  if (gaussian) {
    for (int i = 0; i < n; ++i) sdry[i] = std::sqrt(var_x[i]) * ry[i];
  }
  for (int m = 0; m < M; ++m) {
    kernels::ProductMoments pm{};
    if (gaussian) {
      fill_std_normal(rng, gvec.data(), un);
      pm = kernels::product_moments(sdry.data(), gvec.data(), un);
    } else {
      const Eigen::VectorXd xt = resample_x(law_x, mu_x, var_x, rng);
      const Eigen::VectorXd rxt = xt - mu_x;
      pm = kernels::product_moments(rxt.data(), ry.data(), un);
    }
    const double mean = pm.sum / n;
    const double var = pm.sum_sq / n - mean * mean;
    const double s = std::sqrt(std::max(var, 0.0));
    if (s < kNormalizerFloor) {
      stats[m] = 0.0;
      ++degenerate;
    } else {
      stats[m] = (pm.sum / sqrt_n) / s;
    }
  }

  // Q_{1-alpha} as the ceil((1-alpha)M)-th order statistic
  std::vector<double> sorted = stats;
  std::sort(sorted.begin(), sorted.end());
  const int rank = std::max(
      1, static_cast<int>(std::ceil((1.0 - alpha) * M)));
  const double critical = sorted[rank - 1];

  TestResult res;
  res.method = "ndcrt-hat";
  res.alpha = alpha;
  res.statistic = g.statistic;
  res.p_value = 1.0 - std_normal_cdf(res.statistic);
  res.reject = res.statistic > critical;
  res.diagnostics["critical_value"] = critical;
  res.diagnostics["degenerate_resamples"] = degenerate;
  res.diagnostics["normalizer"] = g.normalizer;
  res.diagnostics["resample_statistics"] = stats;
  return res;
}

TestResult maxway_crt(const SemiSupervisedData& semi, int M, double alpha,
                      Rng& rng) {
  semi.validate();
  const bool binary_x = [&] {
    for (Eigen::Index i = 0; i < semi.unlabeled_x.size(); ++i)
      if (semi.unlabeled_x[i] != 0.0 && semi.unlabeled_x[i] != 1.0)
        return false;
    for (Eigen::Index i = 0; i < semi.labeled.x.size(); ++i)
      if (semi.labeled.x[i] != 0.0 && semi.labeled.x[i] != 1.0) return false;
    return true;
  }();
  const Family fam_x = binary_x ? Family::binomial : Family::gaussian;
  CondLawX law;
  law.mean =
      fit_post_lasso(semi.unlabeled_z, semi.unlabeled_x, fam_x, 5, rng);
  law.variance = binary_x ? VarianceEstimator::bernoulli()
                          : VarianceEstimator::residual_squared();
  law.sampler = binary_x ? SamplerKind::bernoulli : SamplerKind::gaussian;
  const MeanModel my =
      fit_post_lasso(semi.labeled.z, semi.labeled.y, semi.labeled.family, 5,
                     rng);
  TestResult res = dcrt_hat(semi.labeled, law, my, M, alpha, rng);
  res.method = "maxway-crt";
  return res;
}

TestResult maxway_crt_supervised(const Dataset& data, int M, double alpha,
                                 Rng& rng) {
  data.validate();
  const int n = data.n();
  if (n < 4)
    throw InvalidInputError("maxway_crt_supervised needs at least 4 rows");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int n_unlab = n / 2;
  SemiSupervisedData semi;
  semi.unlabeled_x.resize(n_unlab);
  semi.unlabeled_z.resize(n_unlab, data.p());
  const int n_lab = n - n_unlab;
  semi.labeled.family = data.family;
  semi.labeled.x.resize(n_lab);
  semi.labeled.y.resize(n_lab);
  semi.labeled.z.resize(n_lab, data.p());
  for (int i = 0; i < n_unlab; ++i) {
    semi.unlabeled_x[i] = data.x[idx[i]];
    semi.unlabeled_z.row(i) = data.z.row(idx[i]);
  }
  for (int i = 0; i < n_lab; ++i) {
    const int src = idx[n_unlab + i];
    semi.labeled.x[i] = data.x[src];
    semi.labeled.y[i] = data.y[src];
    semi.labeled.z.row(i) = data.z.row(src);
  }
  return maxway_crt(semi, M, alpha, rng);
}

ErrorMetrics error_metrics(const Dataset& data, const GroundTruth& truth,
                           const MeanModel& mx, const MeanModel& my,
                           const CondLawX& law_x) {
  const auto [mu_x_true, mu_y_true] = true_conditional_means(truth, data.z);
  const int n = data.n();
  const Eigen::VectorXd dx = mx.predict(data.z) - mu_x_true;
  const Eigen::VectorXd mu_x_hat = law_x.mean.predict(data.z);
  const Eigen::VectorXd dy = my.predict(data.z) - mu_y_true;
  const Eigen::VectorXd var_hat =
      variance_of_x_given_z(law_x.variance, data.x, mu_x_hat);

  ErrorMetrics em;
  double sx = 0.0, sxp = 0.0, sy = 0.0, syp = 0.0, syph = 0.0;
  for (int i = 0; i < n; ++i) {
    const double vx_true =
        truth.binary_x ? mu_x_true[i] * (1.0 - mu_x_true[i]) : 1.0;
    const double vy_true = truth.family == Family::binomial
                               ? mu_y_true[i] * (1.0 - mu_y_true[i])
                               : 1.0;
    sx += dx[i] * dx[i];
    sxp += dx[i] * dx[i] * vy_true;
    sy += dy[i] * dy[i];
    syp += dy[i] * dy[i] * vx_true;
    syph += dy[i] * dy[i] * var_hat[i];
  }
  em.e_nx = std::sqrt(sx / n);
  em.e_nx_prime = std::sqrt(sxp / n);
  em.e_ny = std::sqrt(sy / n);
  em.e_ny_prime = std::sqrt(syp / n);
  em.e_ny_prime_hat = std::sqrt(syph / n);
  return em;
}

}  // namespace citest
