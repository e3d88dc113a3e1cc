#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "citest/core_model.hpp"
#include "citest/rng.hpp"
#include "json.hpp"

namespace citest {

// A fitted conditional-mean model. Coefficients are on the original data
// scale (zero where inactive); binomial models predict probabilities.
struct MeanModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  Family family = Family::gaussian;
  std::vector<int> active_set;

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& z) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& z) const;
  nlohmann::json to_json() const;
};

enum class VarianceKind { residual_squared, mean_variance_function, constant };

// Estimator of V[x|z], evaluated row-wise; outputs are floored at
// kVarianceFloor so the resampling distribution never degenerates.
struct VarianceEstimator {
  VarianceKind kind = VarianceKind::residual_squared;
  std::function<double(double)> f;  // used by mean_variance_function
  double c = 1.0;                   // used by constant

  static VarianceEstimator residual_squared();
  static VarianceEstimator mean_variance(std::function<double(double)> f);
  static VarianceEstimator bernoulli();  // f(t) = t(1-t)
  static VarianceEstimator constant(double c);
};

inline constexpr double kVarianceFloor = 1e-10;

Eigen::VectorXd variance_of_x_given_z(const VarianceEstimator& est,
                                      const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& mu_x_hat);

MeanModel fit_intercept_only(const Eigen::VectorXd& target, Family family);

// Cross-validated lasso via coordinate descent on internally standardized
// columns, lambda path log-spaced from lambda_max down by 1e-3, K-fold
// deviance minimized (lambda_min rule), refit on full data.
struct LassoCvFit {
  MeanModel model;
  double lambda = 0.0;                // selected penalty
  Eigen::VectorXd lambda_path;
  Eigen::VectorXd cv_deviance;        // summed over folds, per path entry
  int selected_index = 0;
};

LassoCvFit lasso_cv(const Eigen::MatrixXd& z, const Eigen::VectorXd& target,
                    Family family, int folds, int lambda_grid_size, Rng& rng);

MeanModel fit_lasso_cv(const Eigen::MatrixXd& z, const Eigen::VectorXd& target,
                       Family family, int folds, int lambda_grid_size,
                       Rng& rng);

// Single lasso fit at a fixed penalty (no cross-validation).
MeanModel fit_lasso_fixed(const Eigen::MatrixXd& z,
                          const Eigen::VectorXd& target, Family family,
                          double lambda);

// Max KKT violations of a gaussian lasso fit at penalty lambda, measured on
// the standardized columns: first = excess of |(1/n) c_j'r| over lambda for
// inactive j, second = max | |(1/n) c_j'r| - lambda | over active j.
std::pair<double, double> lasso_kkt_residuals(const Eigen::MatrixXd& z,
                                              const Eigen::VectorXd& target,
                                              const MeanModel& model,
                                              double lambda);

// Unpenalized refit (OLS or logistic MLE) on a forced active set plus
// intercept. Collinear columns are dropped, smallest index kept.
struct RefitResult {
  MeanModel model;
  std::vector<int> dropped_collinear;
};

RefitResult refit_on_support(const Eigen::MatrixXd& z,
                             const Eigen::VectorXd& target, Family family,
                             const std::vector<int>& active_set);

struct PostLassoFit {
  MeanModel model;
  double lambda = 0.0;
  std::vector<int> dropped_collinear;
};

PostLassoFit post_lasso_cv(const Eigen::MatrixXd& z,
                           const Eigen::VectorXd& target, Family family,
                           int folds, Rng& rng);

MeanModel fit_post_lasso(const Eigen::MatrixXd& z,
                         const Eigen::VectorXd& target, Family family,
                         int folds, Rng& rng);

enum class OracleTarget { x, y };

// Ground-truth conditional mean wrapped as a MeanModel (simulation only).
MeanModel fit_oracle(const GroundTruth& truth, OracleTarget which);

// Kernel ridge regression in the first-order Sobolev space on [0,1] with
// kernel k(a,b) = min(a,b); predictions vanish at 0 by construction.
struct KernelRidgeModel {
  Eigen::VectorXd knots;
  Eigen::VectorXd dual_weights;
  double lambda = 0.0;

  double predict(double t) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& t) const;
};

KernelRidgeModel fit_kernel_ridge_sobolev(const Eigen::VectorXd& z_univariate,
                                          const Eigen::VectorXd& target,
                                          double lambda);

}  // namespace citest
