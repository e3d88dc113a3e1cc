#pragma once

#include <Eigen/Dense>
#include <string>

#include "citest/core_model.hpp"
#include "citest/learners.hpp"
#include "citest/rng.hpp"
#include "json.hpp"

namespace citest {

// A learned model of x|z: mean, conditional-variance estimator, and the
// sampler used when drawing resamples row-wise.
enum class SamplerKind { gaussian, bernoulli };

struct CondLawX {
  MeanModel mean;
  VarianceEstimator variance = VarianceEstimator::residual_squared();
  SamplerKind sampler = SamplerKind::gaussian;
};

struct TestResult {
  std::string method;
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.05;
  nlohmann::json diagnostics = nlohmann::json::object();

  nlohmann::json to_json() const;
};

enum class Sidedness { one_sided, two_sided };

double std_normal_cdf(double t);
double std_normal_quantile(double prob);

// (1/sqrt(n)) * sum_i rx_i * ry_i
double product_residual_statistic(const Eigen::VectorXd& rx,
                                  const Eigen::VectorXd& ry);

// sqrt of the divide-by-n empirical variance of the products rx_i*ry_i.
// Throws DegenerateVarianceError below 1e-12.
double gcm_normalizer(const Eigen::VectorXd& rx, const Eigen::VectorXd& ry);

TestResult gcm_test(const Dataset& data, const MeanModel& mx,
                    const MeanModel& my, double alpha,
                    Sidedness sides = Sidedness::one_sided,
                    const GroundTruth* truth = nullptr);

// GCM with intercept-only models for both means: a Pearson-style test of
// marginal association.
TestResult marginal_gcm(const Dataset& data, double alpha,
                        Sidedness sides = Sidedness::one_sided);

// (1/n) * sum_i Vhat[x_i|z_i] * (y_i - muhat_y(z_i))^2: the variance of the
// resampling distribution of the product statistic.
double dcrt_conditional_variance(const CondLawX& law_x, const Dataset& data,
                                 const MeanModel& my);

// Resampling test: M row-wise draws from law_x with the SAME fitted means,
// p = (1 + #{T_m >= T_obs}) / (M+1).
TestResult dcrt_hat(const Dataset& data, const CondLawX& law_x,
                    const MeanModel& my, int M, double alpha, Rng& rng,
                    Sidedness sides = Sidedness::one_sided);

// Resampling-free limit of dcrt_hat: reject iff T/S_dcrt > z_{1-alpha}.
TestResult mx2_f_test(const Dataset& data, const CondLawX& law_x,
                      const MeanModel& my, double alpha);

// Normalized-statistic variant: observed statistic is the GCM statistic, each
// resample is renormalized by its own product variance, decision via the
// resampled (1-alpha) quantile.
TestResult ndcrt_hat(const Dataset& data, const CondLawX& law_x,
                     const MeanModel& my, int M, double alpha, Rng& rng);

// Semi-supervised comparator: post-lasso mean of x|z from the unlabeled
// rows, post-lasso mean of y|z from the labeled rows, dcrt_hat on labeled.
TestResult maxway_crt(const SemiSupervisedData& semi, int M, double alpha,
                      Rng& rng);

// Supervised wrapper: random 50/50 split, first half treated as unlabeled.
TestResult maxway_crt_supervised(const Dataset& data, int M, double alpha,
                                 Rng& rng);

// In-sample estimation-error summaries against the ground truth; the primed
// versions weight by the true conditional variance of the other variable and
// the hat version by the fitted variance of x|z.
struct ErrorMetrics {
  double e_nx = 0.0;
  double e_nx_prime = 0.0;
  double e_ny = 0.0;
  double e_ny_prime = 0.0;
  double e_ny_prime_hat = 0.0;
};

ErrorMetrics error_metrics(const Dataset& data, const GroundTruth& truth,
                           const MeanModel& mx, const MeanModel& my,
                           const CondLawX& law_x);

// Internal helper shared with the harness: draw one row-wise resample of x.
Eigen::VectorXd resample_x(const CondLawX& law_x, const Eigen::VectorXd& mu_x,
                           const Eigen::VectorXd& var_x, Rng& rng);

}  // namespace citest
