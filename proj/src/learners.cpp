#include "citest/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "citest/errors.hpp"
#include "citest/kernels.hpp"

namespace citest {

namespace {
constexpr double kBinomialClip = 1e-12;
constexpr double kInterceptOnlyClip = 1e-6;
}  // namespace

Eigen::VectorXd MeanModel::linear_predictor(const Eigen::MatrixXd& z) const {
  const int n = static_cast<int>(z.rows());
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, intercept);
  for (int j : active_set) {
    kernels::axpy(coefficients[j], z.col(j).data(), eta.data(),
                  static_cast<std::size_t>(n));
  }
  return eta;
}

Eigen::VectorXd MeanModel::predict(const Eigen::MatrixXd& z) const {
  Eigen::VectorXd eta = linear_predictor(z);
  if (family == Family::binomial) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      eta[i] = std::clamp(logistic(eta[i]), kBinomialClip, 1.0 - kBinomialClip);
    }
  }
  return eta;
}

nlohmann::json MeanModel::to_json() const {
  nlohmann::json coefs = nlohmann::json::array();
  for (int j : active_set) {
    coefs.push_back({{"index", j}, {"value", coefficients[j]}});
  }
  return {{"intercept", intercept},
          {"family", family_name(family)},
          {"coefficients", coefs}};
}

VarianceEstimator VarianceEstimator::residual_squared() {
  VarianceEstimator v;
  v.kind = VarianceKind::residual_squared;
  return v;
}

VarianceEstimator VarianceEstimator::mean_variance(
    std::function<double(double)> f) {
  VarianceEstimator v;
  v.kind = VarianceKind::mean_variance_function;
  v.f = std::move(f);
  return v;
}

VarianceEstimator VarianceEstimator::bernoulli() {
  return mean_variance([](double t) { return t * (1.0 - t); });
}

VarianceEstimator VarianceEstimator::constant(double c) {
  if (c <= 0.0) throw InvalidInputError("constant variance must be positive");
  VarianceEstimator v;
  v.kind = VarianceKind::constant;
  v.c = c;
  return v;
}

Eigen::VectorXd variance_of_x_given_z(const VarianceEstimator& est,
                                      const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& mu_x_hat) {
  if (x.size() != mu_x_hat.size())
    throw InvalidInputError("variance_of_x_given_z: length mismatch");
  const Eigen::Index n = x.size();
  Eigen::VectorXd v(n);
  switch (est.kind) {
    case VarianceKind::residual_squared:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double r = x[i] - mu_x_hat[i];
        v[i] = r * r;
      }
      break;
    case VarianceKind::mean_variance_function:
      if (!est.f)
        throw InvalidInputError(
            "mean_variance_function estimator has no function configured");
      for (Eigen::Index i = 0; i < n; ++i) v[i] = est.f(mu_x_hat[i]);
      break;
    case VarianceKind::constant:
      v.setConstant(est.c);
      break;
  }
  return v.cwiseMax(kVarianceFloor);
}

MeanModel fit_intercept_only(const Eigen::VectorXd& target, Family family) {
  if (target.size() < 1)
    throw InvalidInputError("fit_intercept_only: empty target");
  MeanModel m;
  m.family = family;
  m.coefficients = Eigen::VectorXd();
  const double mean = target.mean();
  if (family == Family::binomial) {
    const double prop =
        std::clamp(mean, kInterceptOnlyClip, 1.0 - kInterceptOnlyClip);
    m.intercept = std::log(prop / (1.0 - prop));
  } else {
    m.intercept = mean;
  }
  return m;
}

namespace {

// Greedy modified Gram-Schmidt in index order: returns positions (into cols)
// of a maximal independent prefix-greedy subset.
std::vector<int> independent_columns(const Eigen::MatrixXd& design,
                                     std::vector<int>* dropped) {
  const int k = static_cast<int>(design.cols());
  std::vector<int> kept;
  std::vector<Eigen::VectorXd> basis;
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd v = design.col(j);
    const double orig = v.norm();
    for (const auto& q : basis) v -= q.dot(v) * q;
    if (v.norm() > 1e-8 * std::max(orig, 1.0)) {
      basis.push_back(v.normalized());
      kept.push_back(j);
    } else if (dropped) {
      dropped->push_back(j);
    }
  }
  return kept;
}

Eigen::VectorXd logistic_mle(const Eigen::MatrixXd& design,
                             const Eigen::VectorXd& y) {
  const int k = static_cast<int>(design.cols());
  const int n = static_cast<int>(design.rows());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double dev_prev = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 50; ++iter) {
    Eigen::VectorXd eta = design * beta;
    for (int i = 0; i < n; ++i) eta[i] = std::clamp(eta[i], -30.0, 30.0);
    Eigen::VectorXd p(n), w(n);
    double dev = 0.0;
    for (int i = 0; i < n; ++i) {
      p[i] = logistic(eta[i]);
      const double pc = std::clamp(p[i], kBinomialClip, 1.0 - kBinomialClip);
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-10);
      dev -= 2.0 * (y[i] * std::log(pc) + (1.0 - y[i]) * std::log1p(-pc));
    }
    const Eigen::VectorXd score = design.transpose() * (y - p);
    if (score.lpNorm<Eigen::Infinity>() / n < 1e-10) return beta;
    const Eigen::MatrixXd hess =
        design.transpose() * w.asDiagonal() * design;
    Eigen::VectorXd step = hess.ldlt().solve(score);
    // step halving if the deviance worsens
    double scale = 1.0;
    for (int h = 0; h < 20; ++h) {
      Eigen::VectorXd cand = beta + scale * step;
      Eigen::VectorXd eta_c = design * cand;
      double dev_c = 0.0;
      for (int i = 0; i < n; ++i) {
        const double pc = std::clamp(logistic(std::clamp(eta_c[i], -30.0, 30.0)),
                                     kBinomialClip, 1.0 - kBinomialClip);
        dev_c -= 2.0 * (y[i] * std::log(pc) + (1.0 - y[i]) * std::log1p(-pc));
      }
      if (dev_c <= dev + 1e-12) {
        beta = cand;
        dev = dev_c;
        break;
      }
      scale *= 0.5;
      if (h == 19) beta = cand;  // accept tiny step rather than stall
    }
    if (std::abs(dev - dev_prev) < 1e-10 * (std::abs(dev) + 0.1)) return beta;
    dev_prev = dev;
  }
  throw ConvergenceError(
      "logistic refit did not converge after 50 Newton iterations");
}

}  // namespace

RefitResult refit_on_support(const Eigen::MatrixXd& z,
                             const Eigen::VectorXd& target, Family family,
                             const std::vector<int>& active_set) {
  RefitResult out;
  if (active_set.empty()) {
    out.model = fit_intercept_only(target, family);
    return out;
  }
  const int n = static_cast<int>(z.rows());
  const int k = static_cast<int>(active_set.size());
  Eigen::MatrixXd design(n, k + 1);
  design.col(0).setOnes();
  for (int j = 0; j < k; ++j) design.col(j + 1) = z.col(active_set[j]);

  std::vector<int> dropped_pos;
  const std::vector<int> kept = independent_columns(design, &dropped_pos);
  for (int pos : dropped_pos) {
    if (pos > 0) out.dropped_collinear.push_back(active_set[pos - 1]);
  }
  Eigen::MatrixXd reduced(n, kept.size());
  for (std::size_t j = 0; j < kept.size(); ++j)
    reduced.col(j) = design.col(kept[j]);

  Eigen::VectorXd coef;
  if (family == Family::gaussian) {
    coef = reduced.householderQr().solve(target);
  } else {
    coef = logistic_mle(reduced, target);
  }

  MeanModel m;
  m.family = family;
  m.coefficients = Eigen::VectorXd::Zero(z.cols());
  for (std::size_t j = 0; j < kept.size(); ++j) {
    if (kept[j] == 0) {
      m.intercept = coef[j];
    } else {
      const int col = active_set[kept[j] - 1];
      m.coefficients[col] = coef[j];
      m.active_set.push_back(col);
    }
  }
  out.model = m;
  return out;
}

PostLassoFit post_lasso_cv(const Eigen::MatrixXd& z,
                           const Eigen::VectorXd& target, Family family,
                           int folds, Rng& rng) {
  const LassoCvFit sel = lasso_cv(z, target, family, folds, 100, rng);
  PostLassoFit out;
  out.lambda = sel.lambda;
  if (sel.model.active_set.empty()) {
    out.model = fit_intercept_only(target, family);
    return out;
  }
  RefitResult refit =
      refit_on_support(z, target, family, sel.model.active_set);
  out.model = std::move(refit.model);
  out.dropped_collinear = std::move(refit.dropped_collinear);
  return out;
}

MeanModel fit_post_lasso(const Eigen::MatrixXd& z,
                         const Eigen::VectorXd& target, Family family,
                         int folds, Rng& rng) {
  return post_lasso_cv(z, target, family, folds, rng).model;
}

MeanModel fit_oracle(const GroundTruth& truth, OracleTarget which) {
  MeanModel m;
  m.coefficients = Eigen::VectorXd::Zero(truth.p());
  if (which == OracleTarget::x) {
    m.family = truth.binary_x ? Family::binomial : Family::gaussian;
    m.coefficients = truth.coef_x;
  } else {
    m.family = truth.family;
    if (truth.family == Family::binomial) {
      if (truth.theta != 0.0)
        throw InvalidInputError(
            "oracle E[y|z] has no closed form for binomial y with theta != 0");
      m.coefficients = truth.coef_y;
    } else {
      if (truth.binary_x && truth.theta != 0.0)
        throw InvalidInputError(
            "oracle E[y|z] is nonlinear for binary x with theta != 0");
      m.coefficients = truth.coef_y + truth.theta * truth.coef_x;
    }
  }
  for (int j = 0; j < truth.p(); ++j)
    if (m.coefficients[j] != 0.0) m.active_set.push_back(j);
  return m;
}

double KernelRidgeModel::predict(double t) const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < knots.size(); ++i)
    acc += dual_weights[i] * std::min(t, knots[i]);
  return acc;
}

Eigen::VectorXd KernelRidgeModel::predict(const Eigen::VectorXd& t) const {
  Eigen::VectorXd out(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) out[i] = predict(t[i]);
  return out;
}

KernelRidgeModel fit_kernel_ridge_sobolev(const Eigen::VectorXd& z_univariate,
                                          const Eigen::VectorXd& target,
                                          double lambda) {
  const Eigen::Index n = z_univariate.size();
  if (n < 1 || target.size() != n)
    throw InvalidInputError("kernel ridge: need matching nonempty inputs");
  if (lambda <= 0.0)
    throw InvalidInputError("kernel ridge: lambda must be positive");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(z_univariate[i] >= 0.0 && z_univariate[i] <= 1.0))
      throw InvalidInputError("kernel ridge: inputs must lie in [0,1]");
  }
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = std::min(z_univariate[i], z_univariate[j]);
      K(i, j) = v;
      K(j, i) = v;
    }
  Eigen::MatrixXd A = K;
  A.diagonal().array() += n * lambda;
  const auto solver = A.ldlt();
  Eigen::VectorXd w = solver.solve(target);
  w += solver.solve(target - A * w);  // one refinement step

  KernelRidgeModel m;
  m.knots = z_univariate;
  m.dual_weights = std::move(w);
  m.lambda = lambda;
  return m;
}

}  // namespace citest
