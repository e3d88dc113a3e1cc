#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <utility>

#include "citest/rng.hpp"
#include "json.hpp"

namespace citest {

enum class Family { gaussian, binomial };

const char* family_name(Family f);
Family family_from_name(const std::string& name);

// One observed sample: predictor x, response y, covariate matrix z. The
// family tags the distribution of y only.
struct Dataset {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::MatrixXd z;
  Family family = Family::gaussian;

  int n() const { return static_cast<int>(x.size()); }
  int p() const { return static_cast<int>(z.cols()); }
  void validate() const;  // throws InvalidInputError on shape/value violations
};

struct SemiSupervisedData {
  Dataset labeled;
  Eigen::VectorXd unlabeled_x;
  Eigen::MatrixXd unlabeled_z;

  void validate() const;
};

// Parameters of the simulation data-generating process: covariates are
// AR(1)-correlated Gaussians, x and y load on the leading s coordinates with
// magnitude nu, and theta is the conditional signal of x on y.
struct GroundTruth {
  Eigen::VectorXd coef_x;
  Eigen::VectorXd coef_y;
  double theta = 0.0;
  double rho = 0.0;
  int s = 0;
  double nu = 0.0;
  Family family = Family::gaussian;
  bool binary_x = false;  // draw x from a logistic model instead of Gaussian

  int p() const { return static_cast<int>(coef_x.size()); }

  // coef_x = coef_y = (nu,...,nu,0,...,0) with s leading entries.
  static GroundTruth make(int p, int s, double rho, double nu, double theta,
                          Family family, bool binary_x = false);

  // configuration-object form (keys p, s, rho, theta, nu, family, binary_x)
  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& config);
};

// Entry (i,j) = rho^|i-j|; symmetric positive definite for |rho| < 1.
Eigen::MatrixXd ar1_covariance(int p, double rho);

// n i.i.d. rows from N(0, ar1_covariance(p, rho)) via the scalar recursion
// Z_1 ~ N(0,1), Z_j = rho*Z_{j-1} + sqrt(1-rho^2)*eps_j. Exact in law, O(np).
Eigen::MatrixXd sample_ar1_gaussian(int n, int p, double rho, Rng& rng);

// q = coef' * ar1_covariance(p, rho) * coef, in closed form for the
// (nu,...,nu,0,...) pattern; the variance of the linear predictor z'coef.
double ar1_quadratic_form(int s, double rho, double nu);

Dataset generate_dataset(const GroundTruth& truth, int n, Rng& rng);

// Same marginals but y's conditional mean uses E[x|z]*theta in place of
// x*theta, so y is conditionally independent of x given z by construction.
Dataset generate_point_null_dataset(const GroundTruth& truth, int n, Rng& rng);

// (E[x|z], E[y|z]) row-wise. Throws for binomial y with theta != 0, where no
// closed form exists.
std::pair<Eigen::VectorXd, Eigen::VectorXd> true_conditional_means(
    const GroundTruth& truth, const Eigen::MatrixXd& z);

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// CSV with header x,y,z1..zp.
void write_dataset_csv(const Dataset& ds, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);

}  // namespace citest
