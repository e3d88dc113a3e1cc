#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include "citest/errors.hpp"
#include "citest/kernels.hpp"
#include "citest/learners.hpp"

// Coordinate-descent lasso with internal standardization, warm starts along a
// log-spaced lambda path, sequential strong-rule screening with full KKT
// verification passes, and a saturation / df cap that freezes the tail of the
// path once the fit interpolates. The binomial case wraps the same weighted
// update in an IRLS outer loop. Columns are standardized to mean 0 and
// (1/n)||c_j||^2 = 1, in which units the KKT conditions take the textbook
// soft-threshold form certified by lasso_kkt_residuals.

namespace citest {

namespace {

constexpr double kCdTolPath = 1e-6;   // max |delta beta| per sweep on the path
constexpr double kCdTolFinal = 1e-8;  // polish at the selected lambda
constexpr long kTouchBudgetFactor = 400;  // coordinate touches per lambda, x p
constexpr double kDevRatioSaturated = 0.999;
constexpr double kMinPathProgress = 1e-5;  // fractional deviance gain per step
constexpr int kIrlsMaxIter = 100;
constexpr double kIrlsTol = 1e-8;  // relative deviance change
constexpr double kMinWeight = 1e-5;
constexpr double kProbClip = 1e-12;
constexpr double kPathRatio = 1e-3;

inline double soft_threshold(double v, double lambda) {
  if (v > lambda) return v - lambda;
  if (v < -lambda) return v + lambda;
  return 0.0;
}

struct StandardizedDesign {
  Eigen::MatrixXd c;            // n x p, unusable columns zeroed
  Eigen::VectorXd mean, scale;  // per column; scale 0 marks unusable
  int n = 0, p = 0;
};

StandardizedDesign standardize(const Eigen::MatrixXd& z) {
  StandardizedDesign d;
  d.n = static_cast<int>(z.rows());
  d.p = static_cast<int>(z.cols());
  d.c = z;
  d.mean.resize(d.p);
  d.scale.resize(d.p);
  const double inv_n = 1.0 / d.n;
  for (int j = 0; j < d.p; ++j) {
    double* col = d.c.col(j).data();
    const double m = kernels::sum(col, static_cast<std::size_t>(d.n)) * inv_n;
    d.mean[j] = m;
    for (int i = 0; i < d.n; ++i) col[i] -= m;
    const double ss =
        kernels::dot(col, col, static_cast<std::size_t>(d.n)) * inv_n;
    if (ss < 1e-14) {
      d.scale[j] = 0.0;
      d.c.col(j).setZero();
    } else {
      const double sd = std::sqrt(ss);
      d.scale[j] = sd;
      const double inv = 1.0 / sd;
      for (int i = 0; i < d.n; ++i) col[i] *= inv;
    }
  }
  return d;
}

// One pass over the given coordinates; returns max |delta beta|.
double cd_sweep_gaussian(const StandardizedDesign& d, double lambda,
                         Eigen::VectorXd& beta, Eigen::VectorXd& r,
                         const std::vector<int>& coords) {
  const double inv_n = 1.0 / d.n;
  const auto n = static_cast<std::size_t>(d.n);
  double max_delta = 0.0;
  for (int j : coords) {
    if (d.scale[j] == 0.0) continue;
    const double* col = d.c.col(j).data();
    const double g = kernels::dot(col, r.data(), n) * inv_n + beta[j];
    const double bj = soft_threshold(g, lambda);
    const double delta = bj - beta[j];
    if (delta != 0.0) {
      kernels::axpy(-delta, col, r.data(), n);
      beta[j] = bj;
      max_delta = std::max(max_delta, std::abs(delta));
    }
  }
  return max_delta;
}

std::vector<int> nonzero_coords(const Eigen::VectorXd& beta) {
  std::vector<int> v;
  for (int j = 0; j < beta.size(); ++j)
    if (beta[j] != 0.0) v.push_back(j);
  return v;
}

// Converges coordinate descent on a fixed working set, budget-capped.
void cd_converge_gaussian(const StandardizedDesign& d, double lambda,
                          Eigen::VectorXd& beta, Eigen::VectorXd& r,
                          const std::vector<int>& working, double tol,
                          long* budget) {
  while (*budget > 0) {
    *budget -= static_cast<long>(working.size());
    if (cd_sweep_gaussian(d, lambda, beta, r, working) < tol) break;
    auto active = nonzero_coords(beta);
    while (*budget > 0) {
      *budget -= static_cast<long>(active.size());
      if (cd_sweep_gaussian(d, lambda, beta, r, active) < tol) break;
    }
  }
}

// (1/n) C' r for all columns: one full gradient pass.
void full_gradient(const StandardizedDesign& d, const Eigen::VectorXd& r,
                   Eigen::VectorXd& g) {
  const double inv_n = 1.0 / d.n;
  const auto n = static_cast<std::size_t>(d.n);
  for (int j = 0; j < d.p; ++j) {
    g[j] = d.scale[j] == 0.0
               ? 0.0
               : kernels::dot(d.c.col(j).data(), r.data(), n) * inv_n;
  }
}

// Solves one gaussian lasso at the given lambda via strong-rule screening
// with KKT verification; g must hold the full gradient at the warm start and
// is left holding the full gradient at the solution.
void cd_gaussian_screened(const StandardizedDesign& d, double lambda,
                          double lambda_prev, Eigen::VectorXd& beta,
                          Eigen::VectorXd& r, Eigen::VectorXd& g, double tol) {
  const double strong_cut = 2.0 * lambda - lambda_prev;
  std::vector<char> in_working(d.p, 0);
  std::vector<int> working;
  for (int j = 0; j < d.p; ++j) {
    if (beta[j] != 0.0 || std::abs(g[j]) >= strong_cut) {
      in_working[j] = 1;
      working.push_back(j);
    }
  }
  long budget = kTouchBudgetFactor * static_cast<long>(d.p);
  while (true) {
    cd_converge_gaussian(d, lambda, beta, r, working, tol, &budget);
    full_gradient(d, r, g);
    bool violation = false;
    for (int j = 0; j < d.p; ++j) {
      if (!in_working[j] && std::abs(g[j]) > lambda + 1e-9) {
        in_working[j] = 1;
        working.push_back(j);
        violation = true;
      }
    }
    if (!violation || budget <= 0) break;
  }
}

double gaussian_lambda_max(const Eigen::VectorXd& g) {
  double lmax = 0.0;
  for (int j = 0; j < g.size(); ++j) lmax = std::max(lmax, std::abs(g[j]));
  return lmax;
}

// Covariance-mode gaussian solver for n >> p: the full gradient is kept
// exact under rank-one Gram updates, so coordinate touches cost O(p) and
// screening/KKT checks are free. Gram columns are built lazily.
class CovModeSolver {
 public:
  CovModeSolver(const StandardizedDesign& d, const Eigen::VectorXd& centered)
      : d_(d), gram_(d.p), grad_(d.p) {
    full_gradient(d, centered, grad_);
  }

  const Eigen::VectorXd& grad() const { return grad_; }

  // converge on a working set at the given lambda, with KKT growth
  void solve(double lambda, double lambda_prev, Eigen::VectorXd& beta,
             double tol) {
    const double strong_cut = 2.0 * lambda - lambda_prev;
    std::vector<char> in_working(d_.p, 0);
    std::vector<int> working;
    for (int j = 0; j < d_.p; ++j) {
      if (beta[j] != 0.0 || std::abs(grad_[j]) >= strong_cut) {
        in_working[j] = 1;
        working.push_back(j);
      }
    }
    long budget = kTouchBudgetFactor * static_cast<long>(d_.p);
    while (true) {
      while (budget > 0) {
        budget -= static_cast<long>(working.size());
        if (sweep(lambda, beta, working) < tol) break;
        auto active = nonzero_coords(beta);
        while (budget > 0) {
          budget -= static_cast<long>(active.size());
          if (sweep(lambda, beta, active) < tol) break;
        }
      }
      bool violation = false;
      for (int j = 0; j < d_.p; ++j) {
        if (!in_working[j] && d_.scale[j] != 0.0 &&
            std::abs(grad_[j]) > lambda + 1e-9) {
          in_working[j] = 1;
          working.push_back(j);
          violation = true;
        }
      }
      if (!violation || budget <= 0) break;
    }
  }

 private:
  double sweep(double lambda, Eigen::VectorXd& beta,
               const std::vector<int>& coords) {
    double max_delta = 0.0;
    for (int j : coords) {
      if (d_.scale[j] == 0.0) continue;
      const double g = grad_[j] + beta[j];
      const double bj = soft_threshold(g, lambda);
      const double delta = bj - beta[j];
      if (delta != 0.0) {
        beta[j] = bj;
        const Eigen::VectorXd& gj = gram_column(j);
        kernels::axpy(-delta, gj.data(), grad_.data(),
                      static_cast<std::size_t>(d_.p));
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    return max_delta;
  }

  const Eigen::VectorXd& gram_column(int j) {
    if (gram_[j].size() == 0) {
      gram_[j].resize(d_.p);
      const auto n = static_cast<std::size_t>(d_.n);
      const double inv_n = 1.0 / d_.n;
      const double* cj = d_.c.col(j).data();
      for (int k = 0; k < d_.p; ++k) {
        gram_[j][k] = d_.scale[k] == 0.0
                          ? 0.0
                          : kernels::dot(d_.c.col(k).data(), cj, n) * inv_n;
      }
    }
    return gram_[j];
  }

  const StandardizedDesign& d_;
  std::vector<Eigen::VectorXd> gram_;
  Eigen::VectorXd grad_;
};

Eigen::VectorXd log_spaced_path(double lambda_max, int size) {
  Eigen::VectorXd path(size);
  if (size == 1) {
    path[0] = lambda_max;
    return path;
  }
  const double log_max = std::log(lambda_max);
  const double log_min = std::log(lambda_max * kPathRatio);
  for (int i = 0; i < size; ++i) {
    path[i] = std::exp(log_max + (log_min - log_max) * i / (size - 1));
  }
  return path;
}

struct BinomialState {
  Eigen::VectorXd beta;  // standardized-space coefficients
  double b0 = 0.0;       // intercept on the standardized design
  Eigen::VectorXd eta;   // linear predictor
};

double binomial_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = std::clamp(logistic(eta[i]), kProbClip, 1.0 - kProbClip);
    dev -= 2.0 * (y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p));
  }
  return dev;
}

// Penalized weighted least squares step for one IRLS iteration. v caches the
// curvature (1/n) sum w c_j^2 per touched coordinate.
double cd_sweep_weighted(const StandardizedDesign& d, double lambda,
                         const Eigen::VectorXd& w, Eigen::VectorXd& v,
                         std::vector<char>& v_ready, Eigen::VectorXd& beta,
                         Eigen::VectorXd& r, const std::vector<int>& coords) {
  const double inv_n = 1.0 / d.n;
  const auto n = static_cast<std::size_t>(d.n);
  double max_delta = 0.0;
  for (int j : coords) {
    if (d.scale[j] == 0.0) continue;
    const double* col = d.c.col(j).data();
    if (!v_ready[j]) {
      v[j] = kernels::weighted_sumsq(w.data(), col, n) * inv_n;
      v_ready[j] = 1;
    }
    if (v[j] <= 0.0) continue;
    const double g =
        kernels::dot3(w.data(), col, r.data(), n) * inv_n + v[j] * beta[j];
    const double bj = soft_threshold(g, lambda) / v[j];
    const double delta = bj - beta[j];
    if (delta != 0.0) {
      kernels::axpy(-delta, col, r.data(), n);
      beta[j] = bj;
      max_delta = std::max(max_delta, std::abs(delta));
    }
  }
  return max_delta;
}

// Solves one binomial lasso at the given lambda: IRLS restricted to a
// screened working set, then one full weighted-gradient pass to verify KKT,
// repeating on violations. Returns false without touching st if IRLS fails
// to converge (deep-path separation); the caller treats that as saturation.
bool cd_binomial(const StandardizedDesign& d, const Eigen::VectorXd& y,
                 double lambda, double lambda_prev, BinomialState& st,
                 Eigen::VectorXd& g) {
  const double tol = kCdTolPath;
  const BinomialState snapshot = st;
  const Eigen::VectorXd g_snapshot = g;
  Eigen::VectorXd w(d.n), r(d.n), zeta(d.n), wr(d.n), v(d.p);
  std::vector<char> v_ready;
  const double inv_n = 1.0 / d.n;
  const auto n = static_cast<std::size_t>(d.n);

  auto refresh_working_quantities = [&] {
    for (int i = 0; i < d.n; ++i) {
      const double pi = logistic(st.eta[i]);
      const double wi = std::max(pi * (1.0 - pi), kMinWeight);
      w[i] = wi;
      r[i] = (y[i] - pi) / wi;     // working residual at the current eta
      zeta[i] = st.eta[i] + r[i];  // working response
    }
  };
  // w*r = y - p, so the full pass is a plain dot against each column
  auto weighted_gradient = [&] {
    for (int i = 0; i < d.n; ++i) wr[i] = w[i] * r[i];
    for (int j = 0; j < d.p; ++j) {
      g[j] = d.scale[j] == 0.0
                 ? 0.0
                 : kernels::dot(d.c.col(j).data(), wr.data(), n) * inv_n;
    }
  };

  refresh_working_quantities();
  const double strong_cut = 2.0 * lambda - lambda_prev;
  std::vector<char> in_working(d.p, 0);
  std::vector<int> working;
  for (int j = 0; j < d.p; ++j) {
    if (st.beta[j] != 0.0 || std::abs(g[j]) >= strong_cut) {
      in_working[j] = 1;
      working.push_back(j);
    }
  }

  for (int kkt_round = 0; kkt_round < 8; ++kkt_round) {
    // IRLS on the working set only
    double dev_prev = binomial_deviance(y, st.eta);
    bool irls_ok = false;
    for (int iter = 0; iter < kIrlsMaxIter; ++iter) {
      refresh_working_quantities();
      const double wsum = kernels::sum(w.data(), n);
      v_ready.assign(d.p, 0);
      long budget = 60 * static_cast<long>(std::max<std::size_t>(
                             working.size(), 8));
      while (budget > 0) {
        const double d0 = kernels::dot(w.data(), r.data(), n) / wsum;
        if (d0 != 0.0) {
          st.b0 += d0;
          r.array() -= d0;
        }
        budget -= static_cast<long>(working.size());
        if (cd_sweep_weighted(d, lambda, w, v, v_ready, st.beta, r, working) <
            tol)
          break;
        auto active = nonzero_coords(st.beta);
        while (budget > 0) {
          budget -= static_cast<long>(active.size());
          if (cd_sweep_weighted(d, lambda, w, v, v_ready, st.beta, r,
                                active) < tol)
            break;
        }
      }
      st.eta = zeta - r;
      const double dev = binomial_deviance(y, st.eta);
      if (!std::isfinite(dev)) break;
      if (std::abs(dev - dev_prev) < kIrlsTol * (std::abs(dev) + 0.1)) {
        irls_ok = true;
        break;
      }
      dev_prev = dev;
    }
    if (!irls_ok) {
      st = snapshot;
      g = g_snapshot;
      return false;
    }
    refresh_working_quantities();
    weighted_gradient();
    bool violation = false;
    for (int j = 0; j < d.p; ++j) {
      if (!in_working[j] && std::abs(g[j]) > lambda + 1e-9) {
        in_working[j] = 1;
        working.push_back(j);
        violation = true;
      }
    }
    if (!violation) return true;
  }
  return true;  // working set stabilized by construction within the cap
}

MeanModel to_original_scale(const StandardizedDesign& d,
                            const Eigen::VectorXd& beta_std, double intercept,
                            Family family) {
  MeanModel m;
  m.family = family;
  m.coefficients = Eigen::VectorXd::Zero(d.p);
  double shift = 0.0;
  for (int j = 0; j < d.p; ++j) {
    if (beta_std[j] != 0.0 && d.scale[j] > 0.0) {
      m.coefficients[j] = beta_std[j] / d.scale[j];
      shift += m.coefficients[j] * d.mean[j];
      m.active_set.push_back(j);
    }
  }
  m.intercept = intercept - shift;
  return m;
}

// Advances one lasso solution down a decreasing lambda sequence, freezing
// itself once the fit saturates, stalls, or reaches the interpolation
// regime (the cross-validation minimum never sits there).
class PathStepper {
 public:
  PathStepper(StandardizedDesign&& dd, const Eigen::VectorXd& target,
              Family family)
      : d_(std::move(dd)), family_(family), y_(target) {
    df_cap_ = std::max(1, std::min(d_.n / 2, d_.p));
    if (family_ == Family::gaussian) {
      ybar_ = y_.mean();
      centered_ = y_.array() - ybar_;
      tss_ = centered_.squaredNorm();
      rss_prev_ = tss_;
      beta_.setZero(d_.p);
      cov_mode_ = d_.n >= d_.p;
      if (cov_mode_) {
        solver_.emplace(d_, centered_);
      } else {
        r_ = centered_;
        g_.resize(d_.p);
        full_gradient(d_, r_, g_);
      }
    } else {
      st_.beta.setZero(d_.p);
      const double pbar = std::clamp(y_.mean(), kProbClip, 1.0 - kProbClip);
      st_.b0 = std::log(pbar / (1.0 - pbar));
      st_.eta = Eigen::VectorXd::Constant(d_.n, st_.b0);
      null_dev_ = binomial_deviance(y_, st_.eta);
      dev_prev_ = null_dev_;
      const Eigen::VectorXd score = y_.array() - y_.mean();
      g_.resize(d_.p);
      full_gradient(d_, score, g_);
    }
  }

  PathStepper(const PathStepper&) = delete;
  PathStepper& operator=(const PathStepper&) = delete;

  void step(double lambda) {
    if (frozen_) return;
    const double lambda_prev = first_ ? lambda : lambda_prev_;
    first_ = false;
    lambda_prev_ = lambda;
    if (family_ == Family::gaussian) {
      if (cov_mode_) {
        solver_->solve(lambda, lambda_prev, beta_, kCdTolPath);
      } else {
        cd_gaussian_screened(d_, lambda, lambda_prev, beta_, r_, g_,
                             kCdTolPath);
      }
      const auto active = nonzero_coords(beta_);
      double rss;
      if (cov_mode_) {
        Eigen::VectorXd r = centered_;
        for (int j : active)
          kernels::axpy(-beta_[j], d_.c.col(j).data(), r.data(),
                        static_cast<std::size_t>(d_.n));
        rss = r.squaredNorm();
      } else {
        rss = r_.squaredNorm();
      }
      const bool stalled =
          steps_taken_ > 0 && rss_prev_ - rss < kMinPathProgress * tss_;
      rss_prev_ = rss;
      if (rss < (1.0 - kDevRatioSaturated) * tss_ || stalled ||
          static_cast<int>(active.size()) >= df_cap_) {
        frozen_ = true;
      }
    } else {
      const bool converged = cd_binomial(d_, y_, lambda, lambda_prev, st_, g_);
      if (!converged && steps_taken_ == 0)
        throw ConvergenceError(
            "binomial lasso IRLS did not converge at the top of the path");
      const double dev = binomial_deviance(y_, st_.eta);
      const bool stalled =
          steps_taken_ > 0 && dev_prev_ - dev < kMinPathProgress * null_dev_;
      dev_prev_ = dev;
      const int df = static_cast<int>(nonzero_coords(st_.beta).size());
      // a non-converged step means the penalty is too weak to stabilize the
      // fit (separation); freeze from the last stable solution
      if (!converged || stalled ||
          dev < (1.0 - kDevRatioSaturated) * null_dev_ || df >= df_cap_) {
        frozen_ = true;
      }
    }
    ++steps_taken_;
  }

  // tighten the gaussian solution at the final lambda so the KKT certificate
  // holds to kCdTolFinal accuracy
  void polish(double lambda) {
    if (family_ != Family::gaussian) return;
    Eigen::VectorXd r = centered_ - d_.c * beta_;
    Eigen::VectorXd g(d_.p);
    full_gradient(d_, r, g);
    cd_gaussian_screened(d_, lambda, lambda, beta_, r, g, kCdTolFinal);
  }

  MeanModel model() const {
    const Eigen::VectorXd& beta =
        family_ == Family::gaussian ? beta_ : st_.beta;
    const double intercept = family_ == Family::gaussian ? ybar_ : st_.b0;
    return to_original_scale(d_, beta, intercept, family_);
  }

 private:
  StandardizedDesign d_;
  Family family_;
  Eigen::VectorXd y_;
  int df_cap_ = 1;
  bool frozen_ = false;
  bool first_ = true;
  int steps_taken_ = 0;
  double lambda_prev_ = 0.0;
  // gaussian state
  double ybar_ = 0.0, tss_ = 0.0, rss_prev_ = 0.0;
  bool cov_mode_ = false;
  Eigen::VectorXd centered_, beta_, r_, g_;
  std::optional<CovModeSolver> solver_;
  // binomial state
  BinomialState st_;
  double null_dev_ = 0.0, dev_prev_ = 0.0;
};

double lambda_max_for(const StandardizedDesign& d, const Eigen::VectorXd& y) {
  // gaussian score and binomial null score coincide: (1/n)|c_j'(y - ybar)|
  const Eigen::VectorXd centered = y.array() - y.mean();
  Eigen::VectorXd g(d.p);
  full_gradient(d, centered, g);
  return gaussian_lambda_max(g);
}

std::vector<std::vector<int>> make_folds(const Eigen::VectorXd& target,
                                         Family family, int n, int folds,
                                         Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::vector<int>> assignment(folds);
  if (family == Family::binomial) {
    // stratified: shuffle each class, deal round-robin
    std::vector<int> zeros, ones;
    for (int i = 0; i < n; ++i) (target[i] == 1.0 ? ones : zeros).push_back(i);
    std::shuffle(zeros.begin(), zeros.end(), rng);
    std::shuffle(ones.begin(), ones.end(), rng);
    int k = 0;
    for (int i : zeros) assignment[k++ % folds].push_back(i);
    for (int i : ones) assignment[k++ % folds].push_back(i);
  } else {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int i = 0; i < n; ++i) assignment[i % folds].push_back(idx[i]);
  }
  for (auto& f : assignment) std::sort(f.begin(), f.end());
  return assignment;
}

double heldout_deviance(const Eigen::MatrixXd& z_test,
                        const Eigen::VectorXd& y_test, const MeanModel& m) {
  const Eigen::VectorXd pred = m.predict(z_test);
  if (m.family == Family::gaussian) {
    return (y_test - pred).squaredNorm();
  }
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y_test.size(); ++i) {
    const double p = std::clamp(pred[i], kProbClip, 1.0 - kProbClip);
    dev -= 2.0 * (y_test[i] * std::log(p) + (1.0 - y_test[i]) * std::log1p(-p));
  }
  return dev;
}

// Once this many lambda steps have passed the running minimum and the curve
// has risen this much above it, deeper fits cannot win the selection.
constexpr int kCvPatience = 15;
constexpr double kCvRiseFactor = 1.01;

}  // namespace

LassoCvFit lasso_cv(const Eigen::MatrixXd& z, const Eigen::VectorXd& target,
                    Family family, int folds, int lambda_grid_size, Rng& rng) {
  const int n = static_cast<int>(z.rows());
  if (target.size() != n)
    throw InvalidInputError("lasso: target and z row counts differ");
  if (folds < 2 || n < folds)
    throw InvalidInputError("lasso: need n >= folds >= 2");
  if (lambda_grid_size < 1)
    throw InvalidInputError("lasso: need lambda_grid_size >= 1");
  if (!z.allFinite() || !target.allFinite())
    throw InvalidInputError("lasso: non-finite entries in input");

  LassoCvFit out;

  // degenerate targets have an empty path; fall back to the intercept model
  bool degenerate = false;
  if (family == Family::binomial) {
    degenerate = (target.minCoeff() == target.maxCoeff());
  } else {
    const double var = (target.array() - target.mean()).square().sum() / n;
    degenerate = var < 1e-14;
  }
  double lmax = 0.0;
  if (!degenerate) {
    const StandardizedDesign d = standardize(z);
    degenerate = (d.scale.maxCoeff() <= 0.0);
    if (!degenerate) {
      lmax = lambda_max_for(d, target);
      degenerate = lmax <= 0.0;
    }
  }
  if (degenerate) {
    out.model = fit_intercept_only(target, family);
    out.lambda = 0.0;
    out.lambda_path.resize(0);
    out.cv_deviance.resize(0);
    out.selected_index = 0;
    return out;
  }

  out.lambda_path = log_spaced_path(lmax, lambda_grid_size);

  // fold steppers advance in lockstep so the scan can stop as soon as the
  // cross-validation curve has decisively passed its minimum
  const auto assignment = make_folds(target, family, n, folds, rng);
  std::vector<std::unique_ptr<PathStepper>> steppers;
  std::vector<Eigen::MatrixXd> z_tests;
  std::vector<Eigen::VectorXd> y_tests;
  for (int k = 0; k < folds; ++k) {
    const auto& test_idx = assignment[k];
    const int n_test = static_cast<int>(test_idx.size());
    if (n_test == 0) continue;
    const int n_train = n - n_test;
    Eigen::MatrixXd z_train(n_train, z.cols()), z_test(n_test, z.cols());
    Eigen::VectorXd y_train(n_train), y_test(n_test);
    int ti = 0, si = 0;
    std::size_t cursor = 0;
    for (int i = 0; i < n; ++i) {
      if (cursor < test_idx.size() && test_idx[cursor] == i) {
        z_test.row(si) = z.row(i);
        y_test[si++] = target[i];
        ++cursor;
      } else {
        z_train.row(ti) = z.row(i);
        y_train[ti++] = target[i];
      }
    }
    steppers.push_back(std::make_unique<PathStepper>(standardize(z_train),
                                                     y_train, family));
    z_tests.push_back(std::move(z_test));
    y_tests.push_back(std::move(y_test));
  }

  std::vector<double> cv(lambda_grid_size, 0.0);
  int best = 0;
  int computed = 0;
  for (int l = 0; l < lambda_grid_size; ++l) {
    for (std::size_t k = 0; k < steppers.size(); ++k) {
      steppers[k]->step(out.lambda_path[l]);
      cv[l] += heldout_deviance(z_tests[k], y_tests[k], steppers[k]->model());
    }
    computed = l + 1;
    if (cv[l] < cv[best]) best = l;
    if (l >= best + kCvPatience && cv[l] > kCvRiseFactor * cv[best]) break;
  }
  steppers.clear();

  out.cv_deviance =
      Eigen::Map<const Eigen::VectorXd>(cv.data(), computed);
  out.selected_index = best;
  out.lambda = out.lambda_path[best];

  // full-data refit along the path prefix, polished at the selected lambda
  PathStepper full(standardize(z), target, family);
  for (int l = 0; l <= best; ++l) full.step(out.lambda_path[l]);
  full.polish(out.lambda);
  out.model = full.model();
  return out;
}

MeanModel fit_lasso_cv(const Eigen::MatrixXd& z, const Eigen::VectorXd& target,
                       Family family, int folds, int lambda_grid_size,
                       Rng& rng) {
  return lasso_cv(z, target, family, folds, lambda_grid_size, rng).model;
}

MeanModel fit_lasso_fixed(const Eigen::MatrixXd& z,
                          const Eigen::VectorXd& target, Family family,
                          double lambda) {
  const int n = static_cast<int>(z.rows());
  if (target.size() != n)
    throw InvalidInputError("lasso: target and z row counts differ");
  if (!z.allFinite() || !target.allFinite())
    throw InvalidInputError("lasso: non-finite entries in input");
  if (lambda < 0.0) throw InvalidInputError("lasso: lambda must be >= 0");
  PathStepper stepper(standardize(z), target, family);
  stepper.step(lambda);
  stepper.polish(lambda);
  return stepper.model();
}

std::pair<double, double> lasso_kkt_residuals(const Eigen::MatrixXd& z,
                                              const Eigen::VectorXd& target,
                                              const MeanModel& model,
                                              double lambda) {
  if (model.family != Family::gaussian)
    throw InvalidInputError("KKT certificate is defined for the gaussian fit");
  const StandardizedDesign d = standardize(z);
  const Eigen::VectorXd r = target - model.predict(z);
  const double inv_n = 1.0 / d.n;
  const auto n = static_cast<std::size_t>(d.n);
  std::vector<char> active(d.p, 0);
  for (int j : model.active_set) active[j] = 1;
  double worst_inactive = 0.0, worst_active = 0.0;
  for (int j = 0; j < d.p; ++j) {
    if (d.scale[j] == 0.0) continue;
    const double corr =
        std::abs(kernels::dot(d.c.col(j).data(), r.data(), n) * inv_n);
    if (active[j]) {
      worst_active = std::max(worst_active, std::abs(corr - lambda));
    } else {
      worst_inactive = std::max(worst_inactive, corr - lambda);
    }
  }
  return {std::max(worst_inactive, 0.0), worst_active};
}

}  // namespace citest
