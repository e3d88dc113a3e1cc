#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "citest/core_model.hpp"
#include "citest/diagnostics.hpp"
#include "citest/learners.hpp"
#include "citest/parallel.hpp"
#include "citest/sim.hpp"
#include "citest/testing.hpp"
#include "doctest.h"

// Monte Carlo behavior of the tests at desk scale. Seeds are fixed; bands
// were sized from binomial standard errors before freezing.

using namespace citest;

namespace {
const int kWorkers = default_workers();
}

TEST_CASE("oracle gcm holds its level on point-null data") {
  const GroundTruth t =
      GroundTruth::make(40, 5, 0.4, 0.4, 0.6, Family::gaussian);
  const MeanModel mx = fit_oracle(t, OracleTarget::x);
  const MeanModel my = fit_oracle(t, OracleTarget::y);
  const int reps = 2000;
  std::vector<char> reject(reps, 0);
  parallel_for(reps, kWorkers, [&](std::size_t r) {
    Rng rng = make_rng(101, {r});
    const Dataset ds = generate_point_null_dataset(t, 200, rng);
    reject[r] = gcm_test(ds, mx, my, 0.05).reject ? 1 : 0;
  });
  double rate = 0.0;
  for (char c : reject) rate += c;
  rate /= reps;
  // binomial band: alpha +- 2 sqrt(alpha(1-alpha)/R)
  CHECK(rate > 0.05 - 2.0 * std::sqrt(0.05 * 0.95 / reps));
  CHECK(rate < 0.05 + 2.0 * std::sqrt(0.05 * 0.95 / reps) + 0.01);
}

TEST_CASE("dcrt with the true conditional law is close to level in finite samples") {
  const GroundTruth t =
      GroundTruth::make(30, 4, 0.4, 0.5, 0.0, Family::gaussian);
  const MeanModel mx = fit_oracle(t, OracleTarget::x);
  CondLawX law;
  law.mean = mx;
  law.variance = VarianceEstimator::constant(1.0);
  law.sampler = SamplerKind::gaussian;
  const int reps = 2000;
  std::vector<char> reject(reps, 0);
  parallel_for(reps, kWorkers, [&](std::size_t r) {
    Rng rng = make_rng(102, {r});
    const Dataset ds = generate_dataset(t, 150, rng);
    const MeanModel my = fit_intercept_only(ds.y, Family::gaussian);
    Rng rs = make_rng(102, {r, 1});
    reject[r] = dcrt_hat(ds, law, my, 199, 0.05, rs).reject ? 1 : 0;
  });
  double rate = 0.0;
  for (char c : reject) rate += c;
  rate /= reps;
  CHECK(rate <= 0.05 + 0.015);
}

TEST_CASE("gcm statistic is approximately standard normal with kernel ridge means") {
  // univariate smooth means, both learned in sample at the rate-optimal
  // penalty; the null statistic should be close to N(0,1)
  const int n = 500, reps = 600;
  std::vector<double> stats(reps);
  parallel_for(reps, kWorkers, [&](std::size_t r) {
    Rng rng = make_rng(103, {r});
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd z(n), x(n), y(n);
    for (int i = 0; i < n; ++i) z[i] = unif(rng);
    fill_std_normal(rng, x.data(), n);
    fill_std_normal(rng, y.data(), n);
    for (int i = 0; i < n; ++i) {
      const double mx = std::sin(M_PI * z[i] / 2.0);
      const double my = z[i] * z[i];
      x[i] += mx;
      y[i] += my;
    }
    const double lambda = std::pow(n, -2.0 / 3.0);
    const KernelRidgeModel fx = fit_kernel_ridge_sobolev(z, x, lambda);
    const KernelRidgeModel fy = fit_kernel_ridge_sobolev(z, y, lambda);
    const Eigen::VectorXd rx = x - fx.predict(z);
    const Eigen::VectorXd ry = y - fy.predict(z);
    stats[r] = product_residual_statistic(rx, ry) / gcm_normalizer(rx, ry);
  });
  std::sort(stats.begin(), stats.end());
  double ks = 0.0;
  for (int i = 0; i < reps; ++i) {
    const double cdf = std_normal_cdf(stats[i]);
    ks = std::max(ks, std::max((i + 1.0) / reps - cdf, cdf - 1.0 * i / reps));
  }
  CHECK(ks < 0.05);
}

TEST_CASE("mx2 equals the infinite-resample dcrt in the exact-normal case") {
  // constant-variance gaussian resampling law: the resampling distribution
  // is exactly normal, so at large M the two decisions coincide
  const GroundTruth t =
      GroundTruth::make(20, 5, 0.0, 0.3, 0.0, Family::gaussian);
  const int reps = 200;
  std::vector<char> agree(reps, 0);
  parallel_for(reps, kWorkers, [&](std::size_t r) {
    Rng rng = make_rng(104, {r});
    const Dataset ds = generate_dataset(t, 400, rng);
    // explicit shrunk estimator of the coefficient vector
    MeanModel shrunk;
    shrunk.family = Family::gaussian;
    shrunk.coefficients = (1.0 - 2.0 / std::sqrt(400.0)) * t.coef_x;
    for (int j = 0; j < t.p(); ++j)
      if (shrunk.coefficients[j] != 0.0) shrunk.active_set.push_back(j);
    CondLawX law;
    law.mean = shrunk;
    law.variance = VarianceEstimator::constant(1.0);
    const MeanModel my = fit_intercept_only(ds.y, Family::gaussian);
    const TestResult m = mx2_f_test(ds, law, my, 0.05);
    Rng rs = make_rng(104, {r, 1});
    const TestResult d = dcrt_hat(ds, law, my, 10000, 0.05, rs);
    agree[r] = m.reject == d.reject ? 1 : 0;
  });
  double rate = 0.0;
  for (char c : agree) rate += c;
  CHECK(rate / reps >= 0.99);
}

TEST_CASE("ndcrt resampled critical value approaches the normal quantile") {
  const GroundTruth t =
      GroundTruth::make(50, 5, 0.4, 0.3, 0.0, Family::gaussian);
  const int reps = 40, n = 2000, M = 400;
  std::vector<double> crit(reps);
  std::vector<char> agree(reps, 0);
  parallel_for(reps, kWorkers, [&](std::size_t r) {
    Rng rng = make_rng(105, {r});
    const Dataset ds = generate_dataset(t, n, rng);
    Rng fx = make_rng(105, {r, 1});
    Rng fy = make_rng(105, {r, 2});
    CondLawX law;
    law.mean = fit_lasso_cv(ds.z, ds.x, Family::gaussian, 5, 100, fx);
    law.variance = VarianceEstimator::residual_squared();
    const MeanModel my = fit_lasso_cv(ds.z, ds.y, Family::gaussian, 5, 100, fy);
    Rng rs = make_rng(105, {r, 3});
    const TestResult nd = ndcrt_hat(ds, law, my, M, 0.05, rs);
    crit[r] = nd.diagnostics["critical_value"].get<double>();
    const TestResult g = gcm_test(ds, law.mean, my, 0.05);
    agree[r] = nd.reject == g.reject ? 1 : 0;
  });
  double mean_crit = 0.0, agreement = 0.0;
  for (int r = 0; r < reps; ++r) {
    mean_crit += crit[r] / reps;
    agreement += agree[r] / static_cast<double>(reps);
  }
  CHECK(std::abs(mean_crit - 1.6449) < 0.08);
  CHECK(agreement >= 0.95);
}

TEST_CASE("maxway holds its level without confounding") {
  const GroundTruth t =
      GroundTruth::make(50, 5, 0.4, 0.0, 0.0, Family::gaussian);
  const int reps = 400;
  std::vector<char> reject(reps, 0);
  parallel_for(reps, kWorkers, [&](std::size_t r) {
    Rng rng = make_rng(106, {r});
    SemiSupervisedData semi;
    semi.labeled = generate_dataset(t, 100, rng);
    const Dataset extra = generate_dataset(t, 100, rng);
    semi.unlabeled_x = extra.x;
    semi.unlabeled_z = extra.z;
    Rng mrng = make_rng(106, {r, 1});
    reject[r] = maxway_crt(semi, 150, 0.05, mrng).reject ? 1 : 0;
  });
  double rate = 0.0;
  for (char c : reject) rate += c;
  rate /= reps;
  CHECK(rate < 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / reps));
}

TEST_CASE("error product shrinks with sample size for lasso learners") {
  // paired across n on independent draws; supports the rate condition the
  // double-robustness argument needs
  std::vector<double> mean_products;
  for (int n : {200, 400, 800}) {
    const GroundTruth t =
        GroundTruth::make(400, 5, 0.4, 0.25, 0.0, Family::gaussian);
    const int reps = 30;
    std::vector<double> prods(reps);
    parallel_for(reps, kWorkers, [&](std::size_t r) {
      Rng rng = make_rng(107, {static_cast<uint64_t>(n), r});
      const Dataset ds = generate_dataset(t, n, rng);
      Rng fx = make_rng(107, {static_cast<uint64_t>(n), r, 1});
      Rng fy = make_rng(107, {static_cast<uint64_t>(n), r, 2});
      const MeanModel mx =
          fit_lasso_cv(ds.z, ds.x, Family::gaussian, 5, 100, fx);
      const MeanModel my =
          fit_lasso_cv(ds.z, ds.y, Family::gaussian, 5, 100, fy);
      CondLawX law;
      law.mean = mx;
      law.variance = VarianceEstimator::residual_squared();
      const ErrorMetrics em = error_metrics(ds, t, mx, my, law);
      prods[r] = em.e_nx * em.e_ny;
    });
    double mean = 0.0;
    for (double p : prods) mean += p / reps;
    mean_products.push_back(mean);
  }
  CHECK(mean_products[1] < mean_products[0]);
  CHECK(mean_products[2] < mean_products[1]);
}

TEST_CASE("post-lasso beats lasso on the shared support in sample") {
  const MseSummary t = mse_shared_vs_total(400, 100, 5, 0.0, 0.5, 40, 108,
                                           kWorkers);
  CHECK(t.plasso_shared_x < t.lasso_shared_x);
  CHECK(t.plasso_shared_y < t.lasso_shared_y);
}

TEST_CASE("oracle fits give zero estimation error in the mse comparison") {
  // oracle reference: the true coefficients reproduce the linear predictor
  const GroundTruth t =
      GroundTruth::make(20, 3, 0.2, 0.5, 0.0, Family::gaussian);
  Rng rng = make_rng(109, {0});
  const Dataset ds = generate_dataset(t, 100, rng);
  const MeanModel oracle = fit_oracle(t, OracleTarget::x);
  const Eigen::VectorXd pred = oracle.linear_predictor(ds.z);
  CHECK((pred - ds.z * t.coef_x).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("marginal association profiles") {
  SUBCASE("li-style design shows near-total marginal rejection") {
    const LitDesignParams params =
        default_design_params(LitDesign::li2022_like);
    const auto rows =
        marginal_association_profile(params, 200, 0.05, 110, kWorkers);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].rejection_rate >= 0.9);
  }

  SUBCASE("variables far from signals stay near level; independence exact at rho=0") {
    LitDesignParams params = default_design_params(LitDesign::liu2022_like);
    params.n = 400;
    params.p = 200;
    params.s = 10;
    const int reps = 400;
    const auto rows =
        marginal_association_profile(params, reps, 0.05, 111, kWorkers);
    // equally spaced signals at distance >= p/s; check variables at least 8
    // lags away from every signal
    double far_total = 0.0;
    int far_count = 0;
    for (const auto& row : rows) {
      if (row.is_signal) continue;
      bool far = true;
      for (const auto& other : rows) {
        if (other.is_signal &&
            std::abs(other.variable - row.variable) <= 8) {
          far = false;
          break;
        }
      }
      if (far) {
        far_total += row.rejection_rate;
        ++far_count;
      }
    }
    REQUIRE(far_count > 25);
    const double mean_far = far_total / far_count;
    CHECK(std::abs(mean_far - 0.05) <
          3.0 * std::sqrt(0.05 * 0.95 / (reps * 1.0)) + 0.01);

    // rho = 0 removes every confounding path
    params.rho = 0.0;
    const auto rows0 =
        marginal_association_profile(params, reps, 0.05, 112, kWorkers);
    for (const auto& row : rows0) {
      if (!row.is_signal)
        CHECK(std::abs(row.rejection_rate - 0.05) <
              4.0 * std::sqrt(0.05 * 0.95 / reps) + 0.005);
    }
  }
}

TEST_CASE("calibration behaviors") {
  SUBCASE("marginal gcm sits at level when nu = 0") {
    const double rate =
        marginal_gcm_rejection_rate(200, 5, 0.4, 0.0, Family::gaussian, 2000,
                                    113, kWorkers);
    CHECK(std::abs(rate - 0.05) < 0.02);
  }

  SUBCASE("marginal rejection is nondecreasing in nu") {
    double prev = -1.0;
    for (double nu : {0.0, 0.08, 0.16, 0.24, 0.32}) {
      const double rate = marginal_gcm_rejection_rate(
          200, 5, 0.4, nu, Family::gaussian, 1500, 114, kWorkers);
      CHECK(rate >= prev - 0.015);
      prev = rate;
    }
  }

  SUBCASE("oracle power is near level at theta = 0 and nondecreasing") {
    const double at_zero = oracle_gcm_power(200, 5, 0.4, 0.1, 0.0,
                                            Family::gaussian, 2000, 115,
                                            kWorkers);
    CHECK(std::abs(at_zero - 0.05) < 0.02);
    double prev = -1.0;
    for (double theta : {0.0, 0.1, 0.2, 0.3, 0.4}) {
      const double rate = oracle_gcm_power(200, 5, 0.4, 0.1, theta,
                                           Family::gaussian, 1500, 116,
                                           kWorkers);
      CHECK(rate >= prev - 0.015);
      prev = rate;
    }
  }

  SUBCASE("nu calibration hits the target band") {
    CalibrationRecord rec;
    const double nu_max = calibrate_nu_max(200, 400, 5, 0.4, Family::gaussian,
                                           800, 117, kWorkers, &rec);
    const double rate = marginal_gcm_rejection_rate(
        200, 5, 0.4, nu_max, Family::gaussian, 4000, 118, kWorkers);
    CHECK(rate >= 0.97);
    CHECK(rate <= 1.0);
    CHECK(rec.bracket_lo <= nu_max);
    CHECK(rec.bracket_hi >= nu_max);
    CHECK(rec.rate_lo <= rec.rate_hi);
  }

  SUBCASE("theta calibration against the fixed-dimension power formula") {
    // with p = s = 1 and nu = 0 the oracle statistic is a pure signal shift:
    // power(theta) = 1 - Phi(z_{.975} - sqrt(n) theta) + Phi(-z_{.975} - ...)
    const int n = 2000;
    const double theta_max = calibrate_theta_max(n, 2, 1, 0.0, 0.0,
                                                 Family::gaussian, 2000, 119,
                                                 kWorkers);
    // invert the formula at power 0.99: sqrt(n) theta = z_.975 + z_.99
    const double target =
        (std_normal_quantile(0.975) + std_normal_quantile(0.99)) /
        std::sqrt(static_cast<double>(n));
    // s^2(theta0): V[x|z] = 1, V[y|z] = 1 + theta^2 under the alternative;
    // the first-order formula is accurate to a few percent here
    CHECK(oracle_gcm_power(n, 1, 0.0, 0.0, theta_max, Family::gaussian, 4000,
                           120, kWorkers) == doctest::Approx(0.99).epsilon(0.05));
    CHECK(theta_max == doctest::Approx(target).epsilon(0.10));
  }
}

TEST_CASE("negative-result demo matches the closed-form limit") {
  const auto rows = negative_result_demo({0.0, 2.0}, 4000, 4000, 1.0, 0.05,
                                         121, kWorkers);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].limit == doctest::Approx(0.05));
  CHECK(rows[1].limit ==
        doctest::Approx(1.0 - std_normal_cdf(std_normal_quantile(0.95) -
                                             2.0 / std::sqrt(2.0))));
  CHECK(std::abs(rows[0].empirical - rows[0].limit) < 0.02);
  CHECK(std::abs(rows[1].empirical - rows[1].limit) < 0.03);
}

TEST_CASE("efficient information values") {
  FixedDimGplm g;
  g.coef_x = Eigen::VectorXd::Zero(2);
  g.coef_y = Eigen::VectorXd::Zero(2);

  SUBCASE("unit variances") {
    CHECK(efficient_information(g, 10, 1, kWorkers) == 1.0);
  }
  SUBCASE("binary x at a flat half probability") {
    g.binary_x = true;
    CHECK(efficient_information(g, 10, 1, kWorkers) == 0.25);
  }
  SUBCASE("binary x with a real covariate effect, Monte Carlo") {
    g.binary_x = true;
    g.coef_x << 1.0, 0.0;
    const double info = efficient_information(g, 200000, 122, kWorkers);
    // E[m(1-m)] for m = logistic(Z), Z ~ N(0,1): below 1/4, above 1/8
    CHECK(info < 0.25);
    CHECK(info > 0.125);
  }
}

TEST_CASE("power formula spot values") {
  CHECK(1.0 - std_normal_cdf(std_normal_quantile(0.95) - 1.6449) ==
        doctest::Approx(0.5).epsilon(1e-4));
  CHECK(1.0 - std_normal_cdf(std_normal_quantile(0.95) - 3.0) ==
        doctest::Approx(0.9123).epsilon(1e-3));
}
