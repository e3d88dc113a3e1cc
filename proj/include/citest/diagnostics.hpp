#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "citest/core_model.hpp"
#include "json.hpp"

namespace citest {

// Numerical verification of the asymptotic theory: each check computes one
// scalar metric, compares it to a fixed threshold, and reports pass/fail
// together with the sample sizes used. Negative-control variants must fail.
struct TheoryCheckReport {
  std::string name;
  double metric = 0.0;
  double threshold = 0.0;
  bool pass = false;
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const;
};

// Resampled 0.95 critical values of the resampling tests against 1.6449,
// mean absolute deviation per n: must decrease along n_list and fall below
// 0.08 at the largest n. Runs the binary-x variant of the default design so
// that the resampling law is non-normal (the gaussian-sampler case is
// exactly standard normal at every n).
TheoryCheckReport check_critical_value_convergence(
    const std::vector<int>& n_list, int resamples, int reps,
    std::uint64_t seed, int workers);

// Median |(S_dcrt / S_gcm)^2 - 1| with residual-squared variance and lasso
// learners; the ratio equals 1 + (mean product / S_gcm)^2 exactly.
TheoryCheckReport check_variance_equivalence(const std::vector<int>& n_list,
                                             int reps, std::uint64_t seed,
                                             int workers);

// Decision agreement of dcrt_hat and gcm_test under the null and a local
// alternative theta = 2/sqrt(n).
TheoryCheckReport check_test_agreement(int n, int reps, std::uint64_t seed,
                                       int workers);

// Fixed-dimensional generalized partially linear model with known
// conditional variances, used by the information / power checks.
struct FixedDimGplm {
  Eigen::VectorXd coef_x;  // E[x|z] = z'coef_x (or logistic of it)
  Eigen::VectorXd coef_y;  // baseline z-effect on y
  bool binary_x = false;
  double var_x_const = 1.0;  // used when x is gaussian
  double var_y_const = 1.0;
};

// E[ V[x|z] * V[y|z] ] under z ~ N(0, I); exact when both variances are
// constant, Monte Carlo over z draws otherwise.
double efficient_information(const FixedDimGplm& gplm, int reps,
                             std::uint64_t seed, int workers);

// Empirical one-sided power of the oracle GCM at theta = h/sqrt(n) against
// 1 - Phi(z_{1-alpha} - h * s(theta0)), within +-0.03.
TheoryCheckReport check_optimal_power(const std::vector<double>& h_beta_list,
                                      int n, int reps, std::uint64_t seed,
                                      int workers);

struct ConditionalCheckConfig {
  int n = 5000;
  int inner_reps = 1200;   // draws of the conditional randomness
  int outer_draws = 16;    // conditioning draws
  bool negative_control = false;
  bool constant_sigma_algebra = false;
  std::uint64_t seed = 1;
  int workers = 1;
};

// Conditional CLT: KS distance of the conditionally standardized sum to the
// standard normal, averaged over conditioning draws.
TheoryCheckReport check_conditional_clt(const ConditionalCheckConfig& cfg);

// Conditional weak law: median |conditional sample mean - conditional
// expectation| must shrink along n in {500, 2000, 8000}.
TheoryCheckReport check_conditional_wlln(const ConditionalCheckConfig& cfg);

// Conditional quantile convergence: resampled 0.95 quantiles of a sequence
// converging conditionally to the normal approach 1.6449.
TheoryCheckReport check_quantile_convergence(const ConditionalCheckConfig& cfg);

}  // namespace citest
