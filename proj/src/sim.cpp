#include "citest/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>

#include "citest/errors.hpp"
#include "citest/kernels.hpp"
#include "citest/parallel.hpp"

namespace citest {

namespace {

// rng channel tags; every replicate substream is keyed by
// (mode, cell-hash, level, replicate, channel)
enum Channel : std::uint64_t {
  kChanData = 1,
  kChanUnlabeled = 2,
  kChanFoldsX = 3,
  kChanFoldsY = 4,
  kChanMethodBase = 16,
};

enum ModeTag : std::uint64_t {
  kModeNull = 1,
  kModePowerCal = 2,
  kModePowerEval = 3,
};

std::uint64_t cell_key(const Cell& c, Family family) {
  return substream_seed(0x9d2c5680ULL,
                        {static_cast<std::uint64_t>(c.n),
                         static_cast<std::uint64_t>(c.p),
                         static_cast<std::uint64_t>(c.s),
                         static_cast<std::uint64_t>(std::llround(c.rho * 1e9)),
                         family == Family::gaussian ? 0ULL : 1ULL});
}

}  // namespace

const char* setting_name(Setting s) {
  return s == Setting::supervised ? "supervised" : "semi_supervised";
}

Setting setting_from_name(const std::string& name) {
  if (name == "supervised") return Setting::supervised;
  if (name == "semi_supervised" || name == "semi-supervised")
    return Setting::semi_supervised;
  throw InvalidInputError("unknown setting: " + name);
}

std::vector<MethodSpec> default_method_roster(int dcrt_resamples) {
  return {
      {"GCM (LASSO)", TestKind::gcm, MeanKind::lasso, MeanKind::lasso,
       dcrt_resamples},
      {"dCRT-hat (LASSO)", TestKind::dcrt, MeanKind::lasso, MeanKind::lasso,
       dcrt_resamples},
      {"GCM (PLASSO)", TestKind::gcm, MeanKind::post_lasso,
       MeanKind::post_lasso, dcrt_resamples},
      {"dCRT-hat (PLASSO)", TestKind::dcrt, MeanKind::post_lasso,
       MeanKind::post_lasso, dcrt_resamples},
      {"Maxway CRT", TestKind::maxway, MeanKind::post_lasso,
       MeanKind::post_lasso, dcrt_resamples},
      {"GCM (marginal)", TestKind::gcm, MeanKind::intercept_only,
       MeanKind::intercept_only, dcrt_resamples},
      {"GCM (oracle)", TestKind::gcm, MeanKind::oracle, MeanKind::oracle,
       dcrt_resamples},
  };
}

MethodSpec method_by_name(const std::string& name, int dcrt_resamples) {
  const auto roster = default_method_roster(dcrt_resamples);
  for (const auto& m : roster)
    if (m.name == name) return m;
  static const std::vector<std::pair<std::string, int>> aliases = {
      {"gcm-lasso", 0},   {"dcrt-lasso", 1},    {"gcm-plasso", 2},
      {"dcrt-plasso", 3}, {"maxway", 4},        {"gcm-marginal", 5},
      {"gcm-oracle", 6},
  };
  for (const auto& [alias, idx] : aliases)
    if (alias == name) return roster[idx];
  throw InvalidInputError("unknown method: " + name);
}

Cell default_cell() { return Cell{200, 400, 5, 0.4}; }

std::vector<Cell> default_grid_cells() {
  const Cell d = default_cell();
  const int n_values[] = {100, 200, 400, 800, 1600};
  const int p_values[] = {100, 200, 400, 800, 1600};
  const int s_values[] = {5, 10, 20, 40, 80};
  const double rho_values[] = {0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<Cell> cells;
  auto push_unique = [&](const Cell& c) {
    for (const auto& e : cells) {
      if (e.n == c.n && e.p == c.p && e.s == c.s && e.rho == c.rho) return;
    }
    cells.push_back(c);
  };
  for (int n : n_values) push_unique({n, d.p, d.s, d.rho});
  for (int p : p_values) push_unique({d.n, p, d.s, d.rho});
  for (int s : s_values) push_unique({d.n, d.p, s, d.rho});
  for (double rho : rho_values) push_unique({d.n, d.p, d.s, rho});
  return cells;
}

GridSpec grid_spec_from_json(const nlohmann::json& config) {
  GridSpec spec;
  if (config.contains("mode")) {
    const std::string mode = config["mode"];
    if (mode == "null") {
      spec.mode = GridSpec::Mode::null_grid;
    } else if (mode == "power") {
      spec.mode = GridSpec::Mode::power_grid;
    } else {
      throw InvalidInputError("config mode must be 'null' or 'power'");
    }
  }
  if (config.contains("family"))
    spec.family = family_from_name(config["family"]);
  if (config.contains("setting"))
    spec.setting = setting_from_name(config["setting"]);
  spec.n_reps = config.value("n_reps", spec.n_reps);
  spec.alpha = config.value("alpha", spec.alpha);
  spec.dcrt_resamples = config.value("dcrt_resamples", spec.dcrt_resamples);
  spec.n_cal = config.value("n_cal", spec.n_cal);
  spec.calibration_reps =
      config.value("calibration_reps", spec.calibration_reps);
  spec.lasso_folds = config.value("lasso_folds", spec.lasso_folds);
  spec.lambda_grid = config.value("lambda_grid", spec.lambda_grid);
  spec.seed = config.value("seed", spec.seed);
  spec.binary_x = config.value("binary_x", spec.binary_x);
  spec.nu_max_override = config.value("nu_max", spec.nu_max_override);
  spec.theta_max_override =
      config.value("theta_max", spec.theta_max_override);
  if (config.contains("cells")) {
    spec.cells.clear();
    for (const auto& c : config["cells"]) {
      Cell cell = default_cell();
      cell.n = c.value("n", cell.n);
      cell.p = c.value("p", cell.p);
      cell.s = c.value("s", cell.s);
      cell.rho = c.value("rho", cell.rho);
      spec.cells.push_back(cell);
    }
  } else if (config.value("full_grid", false)) {
    spec.cells = default_grid_cells();
  } else {
    Cell cell = default_cell();
    cell.n = config.value("n", cell.n);
    cell.p = config.value("p", cell.p);
    cell.s = config.value("s", cell.s);
    cell.rho = config.value("rho", cell.rho);
    spec.cells = {cell};
  }
  if (config.contains("methods")) {
    spec.methods.clear();
    for (const auto& name : config["methods"]) {
      spec.methods.push_back(
          method_by_name(name.get<std::string>(), spec.dcrt_resamples));
    }
  } else {
    spec.methods = default_method_roster(spec.dcrt_resamples);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// calibration
// ---------------------------------------------------------------------------

double marginal_gcm_rejection_rate(int n, int s, double rho, double nu,
                                   Family family, int reps, std::uint64_t seed,
                                   int workers) {
  const double q = ar1_quadratic_form(s, rho, nu);
  const double sd_u = std::sqrt(q);
  const double z975 = std_normal_quantile(0.975);
  std::vector<char> reject(reps, 0);
  parallel_for(static_cast<std::size_t>(reps), workers, [&](std::size_t r) {
    Rng rng = make_rng(seed, {r});
    Eigen::VectorXd u(n), x(n), y(n);
    fill_std_normal(rng, u.data(), n);
    fill_std_normal(rng, x.data(), n);
    u *= sd_u;
    x += u;
    if (family == Family::binomial) {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (int i = 0; i < n; ++i) y[i] = unif(rng) < logistic(u[i]) ? 1.0 : 0.0;
    } else {
      fill_std_normal(rng, y.data(), n);
      y += u;
    }
    const Eigen::VectorXd rx = x.array() - x.mean();
    const Eigen::VectorXd ry = y.array() - y.mean();
    try {
      const double t =
          product_residual_statistic(rx, ry) / gcm_normalizer(rx, ry);
      reject[r] = std::abs(t) > z975 ? 1 : 0;
    } catch (const DegenerateVarianceError&) {
      reject[r] = 0;
    }
  });
  double total = 0.0;
  for (char c : reject) total += c;
  return total / reps;
}

double oracle_gcm_power(int n, int s, double rho, double nu, double theta,
                        Family family, int reps, std::uint64_t seed,
                        int workers) {
  const double q = ar1_quadratic_form(s, rho, nu);
  const double sd_u = std::sqrt(q);
  const double z975 = std_normal_quantile(0.975);
  std::vector<char> reject(reps, 0);
  parallel_for(static_cast<std::size_t>(reps), workers, [&](std::size_t r) {
    Rng rng = make_rng(seed, {r});
    Eigen::VectorXd u(n), ex(n), rx(n), ry(n);
    fill_std_normal(rng, u.data(), n);
    fill_std_normal(rng, ex.data(), n);
    u *= sd_u;
    rx = ex;  // x - E[x|z]
    if (family == Family::binomial) {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (int i = 0; i < n; ++i) {
        const double xi = u[i] + ex[i];
        const double y = unif(rng) < logistic(theta * xi + u[i]) ? 1.0 : 0.0;
        ry[i] = y - logistic((1.0 + theta) * u[i]);
      }
    } else {
      fill_std_normal(rng, ry.data(), n);
      ry += theta * ex;  // y - E[y|z] = theta*eps_x + eps_y
    }
    try {
      const double t =
          product_residual_statistic(rx, ry) / gcm_normalizer(rx, ry);
      reject[r] = std::abs(t) > z975 ? 1 : 0;
    } catch (const DegenerateVarianceError&) {
      reject[r] = 0;
    }
  });
  double total = 0.0;
  for (char c : reject) total += c;
  return total / reps;
}

namespace {

// Shared bisection: rate() must be (nearly) nondecreasing; finds the level at
// which it crosses 0.99 within +-0.01 or a bracket narrower than 1e-3.
double calibrate_bisect(const std::function<double(double)>& rate,
                        CalibrationRecord* record) {
  constexpr double kTarget = 0.99;
  constexpr double kTol = 0.01;
  constexpr double kWidth = 1e-3;
  CalibrationRecord rec;
  double lo = 0.0, hi = 1.0;
  double rate_lo = rate(lo);
  ++rec.evaluations;
  double rate_hi = rate(hi);
  ++rec.evaluations;
  int doublings = 0;
  while (rate_hi < kTarget) {
    lo = hi;
    rate_lo = rate_hi;
    hi *= 2.0;
    if (++doublings > 20)
      throw ConvergenceError(
          "calibration bracket expansion exceeded 2^20 without reaching the "
          "target rate");
    rate_hi = rate(hi);
    ++rec.evaluations;
  }
  if (rate_lo > rate_hi)
    throw ConvergenceError(
        "calibration bracket endpoints are not monotonically ordered");
  double mid = hi, rate_mid = rate_hi;
  while (hi - lo >= kWidth) {
    mid = 0.5 * (lo + hi);
    rate_mid = rate(mid);
    ++rec.evaluations;
    if (std::abs(rate_mid - kTarget) <= kTol) break;
    if (rate_mid > kTarget) {
      hi = mid;
      rate_hi = rate_mid;
    } else {
      lo = mid;
      rate_lo = rate_mid;
    }
  }
  rec.value = mid;
  rec.bracket_lo = lo;
  rec.bracket_hi = hi;
  rec.rate_lo = rate_lo;
  rec.rate_hi = rate_hi;
  if (record) *record = rec;
  return mid;
}

}  // namespace

double calibrate_nu_max(int n, int p, int s, double rho, Family family,
                        int reps, std::uint64_t seed, int workers,
                        CalibrationRecord* record) {
  if (reps < 500) throw InvalidInputError("calibration needs reps >= 500");
  (void)p;  // the marginal statistic does not involve the null coordinates
  return calibrate_bisect(
      [&](double nu) {
        return marginal_gcm_rejection_rate(n, s, rho, nu, family, reps, seed,
                                           workers);
      },
      record);
}

double calibrate_theta_max(int n, int p, int s, double rho, double nu,
                           Family family, int reps, std::uint64_t seed,
                           int workers, CalibrationRecord* record) {
  if (reps < 500) throw InvalidInputError("calibration needs reps >= 500");
  (void)p;
  return calibrate_bisect(
      [&](double theta) {
        return oracle_gcm_power(n, s, rho, nu, theta, family, reps, seed,
                                workers);
      },
      record);
}

// ---------------------------------------------------------------------------
// calibration cache
// ---------------------------------------------------------------------------

namespace {

std::string cache_key(const Cell& c, Family family) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "n=%d,p=%d,s=%d,rho=%.6f,family=%s", c.n,
                c.p, c.s, c.rho, family_name(family));
  return buf;
}

std::string cache_key_theta(const Cell& c, Family family, double nu) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s,nu=%.9f", cache_key(c, family).c_str(),
                nu);
  return buf;
}

}  // namespace

CalibrationCache::CalibrationCache(std::string path) : path_(std::move(path)) {
  data_ = {{"nu_max", nlohmann::json::object()},
           {"theta_max", nlohmann::json::object()}};
  if (path_.empty()) return;
  std::ifstream in(path_);
  if (!in.good()) return;
  try {
    nlohmann::json loaded;
    in >> loaded;
    if (loaded.contains("nu_max")) data_["nu_max"] = loaded["nu_max"];
    if (loaded.contains("theta_max")) data_["theta_max"] = loaded["theta_max"];
  } catch (const nlohmann::json::exception&) {
    // unreadable cache is treated as empty
  }
}

std::optional<double> CalibrationCache::nu_max(const Cell& cell,
                                               Family family) const {
  const auto& m = data_["nu_max"];
  const auto it = m.find(cache_key(cell, family));
  if (it == m.end()) return std::nullopt;
  return it->get<double>();
}

std::optional<double> CalibrationCache::theta_max(const Cell& cell,
                                                  Family family,
                                                  double nu) const {
  const auto& m = data_["theta_max"];
  const auto it = m.find(cache_key_theta(cell, family, nu));
  if (it == m.end()) return std::nullopt;
  return it->get<double>();
}

void CalibrationCache::store_nu_max(const Cell& cell, Family family,
                                    double value) {
  data_["nu_max"][cache_key(cell, family)] = value;
}

void CalibrationCache::store_theta_max(const Cell& cell, Family family,
                                       double nu, double value) {
  data_["theta_max"][cache_key_theta(cell, family, nu)] = value;
}

void CalibrationCache::save() const {
  if (path_.empty()) return;
  std::ofstream out(path_);
  if (!out.good())
    throw InvalidInputError("cannot write calibration cache: " + path_);
  out << data_.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// grid runner
// ---------------------------------------------------------------------------

namespace {

struct MethodOutcome {
  bool ok = false;
  bool degenerate = false;
  bool reject = false;
  double p = 1.0;
  double statistic = 0.0;  // calibration statistic in power mode
  double e_nx = std::numeric_limits<double>::quiet_NaN();
  double e_ny = std::numeric_limits<double>::quiet_NaN();
};

// Lazily built shared learner fits for one replicate.
class FitBundle {
 public:
  FitBundle(const GridSpec& spec, const GroundTruth& truth,
            const Dataset& labeled, const Eigen::MatrixXd* unlabeled_z,
            const Eigen::VectorXd* unlabeled_x,
            std::initializer_list<std::uint64_t> base_path)
      : spec_(spec), truth_(truth), labeled_(labeled), path_(base_path) {
    if (unlabeled_z != nullptr) {
      pooled_z_.resize(labeled.z.rows() + unlabeled_z->rows(), labeled.z.cols());
      pooled_z_ << labeled.z, *unlabeled_z;
      pooled_x_.resize(labeled.x.size() + unlabeled_x->size());
      pooled_x_ << labeled.x, *unlabeled_x;
    }
  }

  const Eigen::MatrixXd& x_design() const {
    return pooled_z_.size() > 0 ? pooled_z_ : labeled_.z;
  }
  const Eigen::VectorXd& x_target() const {
    return pooled_x_.size() > 0 ? pooled_x_ : labeled_.x;
  }
  Family x_family() const {
    return truth_.binary_x ? Family::binomial : Family::gaussian;
  }

  const MeanModel& mean(MeanKind kind, bool for_x) {
    auto& slot = slot_for(kind, for_x);
    if (!slot.has_value()) {
      if (for_x) {
        switch (kind) {
          case MeanKind::oracle:
            slot = fit_oracle(truth_, OracleTarget::x);
            break;
          case MeanKind::intercept_only:
            slot = fit_intercept_only(x_target(), x_family());
            break;
          case MeanKind::lasso:
            slot = lasso_x_fit().model;
            break;
          case MeanKind::post_lasso: {
            const auto& sel = lasso_x_fit();
            slot = sel.model.active_set.empty()
                       ? fit_intercept_only(x_target(), x_family())
                       : refit_on_support(x_design(), x_target(), x_family(),
                                          sel.model.active_set)
                             .model;
            break;
          }
        }
      } else {
        switch (kind) {
          case MeanKind::oracle:
            slot = oracle_mean_y();
            break;
          case MeanKind::intercept_only:
            slot = fit_intercept_only(labeled_.y, labeled_.family);
            break;
          case MeanKind::lasso:
            slot = lasso_y_fit().model;
            break;
          case MeanKind::post_lasso: {
            const auto& sel = lasso_y_fit();
            slot = sel.model.active_set.empty()
                       ? fit_intercept_only(labeled_.y, labeled_.family)
                       : refit_on_support(labeled_.z, labeled_.y,
                                          labeled_.family,
                                          sel.model.active_set)
                             .model;
            break;
          }
        }
      }
    }
    return *slot;
  }

  CondLawX law_for(const MeanModel& mx) const {
    CondLawX law;
    law.mean = mx;
    if (truth_.binary_x) {
      law.variance = VarianceEstimator::bernoulli();
      law.sampler = SamplerKind::bernoulli;
    } else {
      law.variance = VarianceEstimator::residual_squared();
      law.sampler = SamplerKind::gaussian;
    }
    return law;
  }

 private:
  MeanModel oracle_mean_y() const {
    if (truth_.family == Family::binomial && truth_.theta != 0.0) {
      // matched point-null form: logistic(theta*E[x|z] + z'coef_y), linear
      // when x is Gaussian
      if (truth_.binary_x)
        throw InvalidInputError(
            "oracle E[y|z] unavailable for binary x with theta != 0");
      MeanModel m;
      m.family = Family::binomial;
      m.coefficients = truth_.coef_y + truth_.theta * truth_.coef_x;
      for (int j = 0; j < truth_.p(); ++j)
        if (m.coefficients[j] != 0.0) m.active_set.push_back(j);
      return m;
    }
    return fit_oracle(truth_, OracleTarget::y);
  }

  const LassoCvFit& lasso_x_fit() {
    if (!lasso_x_.has_value()) {
      Rng rng = make_rng_path(kChanFoldsX);
      lasso_x_ = lasso_cv(x_design(), x_target(), x_family(),
                          spec_.lasso_folds, spec_.lambda_grid, rng);
    }
    return *lasso_x_;
  }

  const LassoCvFit& lasso_y_fit() {
    if (!lasso_y_.has_value()) {
      Rng rng = make_rng_path(kChanFoldsY);
      lasso_y_ = lasso_cv(labeled_.z, labeled_.y, labeled_.family,
                          spec_.lasso_folds, spec_.lambda_grid, rng);
    }
    return *lasso_y_;
  }

  Rng make_rng_path(std::uint64_t channel) const {
    std::uint64_t h = mix64(spec_.seed ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t v : path_) h = mix64(h ^ mix64(v));
    h = mix64(h ^ mix64(channel));
    return Rng(h);
  }

  std::optional<MeanModel>& slot_for(MeanKind kind, bool for_x) {
    const int idx = static_cast<int>(kind);
    return for_x ? mean_x_[idx] : mean_y_[idx];
  }

  const GridSpec& spec_;
  const GroundTruth& truth_;
  const Dataset& labeled_;
  Eigen::MatrixXd pooled_z_;
  Eigen::VectorXd pooled_x_;
  std::vector<std::uint64_t> path_;
  std::optional<LassoCvFit> lasso_x_, lasso_y_;
  std::optional<MeanModel> mean_x_[4], mean_y_[4];
};

struct ReplicateInput {
  const GridSpec* spec = nullptr;
  GroundTruth truth;
  int n = 0;
  std::uint64_t cell_tag = 0;
  std::uint64_t mode_tag = 0;
  std::uint64_t level = 0;
  std::uint64_t rep = 0;
  bool point_null = false;      // draw from the matched point null instead
  bool statistics_only = false; // power mode: record statistics, no decision
};

double rms_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::sqrt((a - b).squaredNorm() / a.size());
}

SemiSupervisedData split_supervised(const Dataset& data, Rng& rng) {
  const int n = data.n();
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
  return semi;
}

// Maxway fitting protocol up to the labeled-data models; shared between the
// full test (null grid) and the statistic-only path (power grid).
struct MaxwayParts {
  CondLawX law;
  MeanModel my;
  SemiSupervisedData semi;
};

MaxwayParts maxway_parts(const SemiSupervisedData& semi, Family x_family,
                         Rng& rng) {
  MaxwayParts parts;
  parts.law.mean =
      fit_post_lasso(semi.unlabeled_z, semi.unlabeled_x, x_family, 5, rng);
  if (x_family == Family::binomial) {
    parts.law.variance = VarianceEstimator::bernoulli();
    parts.law.sampler = SamplerKind::bernoulli;
  } else {
    parts.law.variance = VarianceEstimator::residual_squared();
    parts.law.sampler = SamplerKind::gaussian;
  }
  parts.my = fit_post_lasso(semi.labeled.z, semi.labeled.y,
                            semi.labeled.family, 5, rng);
  parts.semi = semi;
  return parts;
}

std::vector<MethodOutcome> run_replicate(const ReplicateInput& in) {
  const GridSpec& spec = *in.spec;
  std::vector<MethodOutcome> out(spec.methods.size());

  auto rng_for = [&](std::uint64_t channel) {
    return make_rng(spec.seed, {in.mode_tag, in.cell_tag, in.level, in.rep,
                                channel});
  };

  Rng data_rng = rng_for(kChanData);
  const Dataset labeled = in.point_null
                              ? generate_point_null_dataset(in.truth, in.n,
                                                            data_rng)
                              : generate_dataset(in.truth, in.n, data_rng);

  Eigen::MatrixXd unlabeled_z;
  Eigen::VectorXd unlabeled_x;
  const bool semi = spec.setting == Setting::semi_supervised;
  if (semi) {
    Rng unlab_rng = rng_for(kChanUnlabeled);
    const Dataset extra = generate_dataset(in.truth, in.n, unlab_rng);
    unlabeled_z = extra.z;
    unlabeled_x = extra.x;
  }

  FitBundle fits(spec, in.truth, labeled, semi ? &unlabeled_z : nullptr,
                 semi ? &unlabeled_x : nullptr,
                 {in.mode_tag, in.cell_tag, in.level, in.rep});

  // true means for the error-metric aggregates, when a closed form exists
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> true_means;
  try {
    true_means = true_conditional_means(in.truth, labeled.z);
  } catch (const InvalidInputError&) {
    true_means = std::nullopt;
  }

  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    const MethodSpec& method = spec.methods[mi];
    MethodOutcome& res = out[mi];
    try {
      if (method.test == TestKind::maxway) {
        Rng mrng = rng_for(kChanMethodBase + mi);
        SemiSupervisedData parts_in;
        if (semi) {
          parts_in.labeled = labeled;
          parts_in.unlabeled_x = unlabeled_x;
          parts_in.unlabeled_z = unlabeled_z;
        } else {
          parts_in = split_supervised(labeled, mrng);
        }
        const MaxwayParts parts =
            maxway_parts(parts_in, fits.x_family(), mrng);
        const Eigen::VectorXd mu_x =
            parts.law.mean.predict(parts.semi.labeled.z);
        const Eigen::VectorXd ry =
            parts.semi.labeled.y - parts.my.predict(parts.semi.labeled.z);
        const Eigen::VectorXd rx = parts.semi.labeled.x - mu_x;
        if (in.statistics_only) {
          res.statistic = product_residual_statistic(rx, ry);
          const double s2 = dcrt_conditional_variance(
              parts.law, parts.semi.labeled, parts.my);
          res.p = 2.0 * (1.0 - std_normal_cdf(
                                   std::abs(res.statistic / std::sqrt(s2))));
        } else {
          TestResult t = dcrt_hat(parts.semi.labeled, parts.law, parts.my,
                                  method.resamples, spec.alpha, mrng);
          res.reject = t.reject;
          res.p = t.p_value;
          res.statistic = t.statistic;
        }
        res.ok = true;
        continue;
      }

      const MeanModel& mx = fits.mean(method.mean_x, true);
      const MeanModel& my = fits.mean(method.mean_y, false);
      if (true_means.has_value()) {
        res.e_nx = rms_diff(mx.predict(labeled.z), true_means->first);
        res.e_ny = rms_diff(my.predict(labeled.z), true_means->second);
      }
      if (method.test == TestKind::gcm) {
        if (in.statistics_only) {
          const Eigen::VectorXd rx = labeled.x - mx.predict(labeled.z);
          const Eigen::VectorXd ry = labeled.y - my.predict(labeled.z);
          res.statistic =
              product_residual_statistic(rx, ry) / gcm_normalizer(rx, ry);
          res.p = 2.0 * (1.0 - std_normal_cdf(std::abs(res.statistic)));
        } else {
          TestResult t = gcm_test(labeled, mx, my, spec.alpha);
          res.reject = t.reject;
          res.p = t.p_value;
          res.statistic = t.statistic;
        }
      } else {  // dcrt
        const CondLawX law = fits.law_for(mx);
        if (in.statistics_only) {
          const Eigen::VectorXd rx = labeled.x - law.mean.predict(labeled.z);
          const Eigen::VectorXd ry = labeled.y - my.predict(labeled.z);
          res.statistic = product_residual_statistic(rx, ry);
          const double s2 = dcrt_conditional_variance(law, labeled, my);
          res.p = 2.0 * (1.0 - std_normal_cdf(
                                   std::abs(res.statistic / std::sqrt(s2))));
        } else {
          Rng mrng = rng_for(kChanMethodBase + mi);
          TestResult t = dcrt_hat(labeled, law, my, method.resamples,
                                  spec.alpha, mrng);
          res.reject = t.reject;
          res.p = t.p_value;
          res.statistic = t.statistic;
        }
      }
      res.ok = true;
    } catch (const DegenerateVarianceError&) {
      res.ok = false;
      res.degenerate = true;
    } catch (const ConvergenceError&) {
      res.ok = false;
    }
  }
  return out;
}

double resolve_nu_max(const GridSpec& spec, const Cell& cell,
                      CalibrationCache& cache, int workers) {
  if (spec.nu_max_override >= 0.0) return spec.nu_max_override;
  if (auto cached = cache.nu_max(cell, spec.family)) return *cached;
  const std::uint64_t cal_seed =
      substream_seed(spec.seed, {0xCA11AULL, cell_key(cell, spec.family)});
  const double value =
      calibrate_nu_max(cell.n, cell.p, cell.s, cell.rho, spec.family,
                       spec.calibration_reps, cal_seed, workers);
  cache.store_nu_max(cell, spec.family, value);
  return value;
}

double resolve_theta_max(const GridSpec& spec, const Cell& cell, double nu,
                         CalibrationCache& cache, int workers) {
  if (spec.theta_max_override >= 0.0) return spec.theta_max_override;
  if (auto cached = cache.theta_max(cell, spec.family, nu)) return *cached;
  const std::uint64_t cal_seed = substream_seed(
      spec.seed, {0xCA11BULL, cell_key(cell, spec.family),
                  static_cast<std::uint64_t>(std::llround(nu * 1e12))});
  const double value =
      calibrate_theta_max(cell.n, cell.p, cell.s, cell.rho, nu, spec.family,
                          spec.calibration_reps, cal_seed, workers);
  cache.store_theta_max(cell, spec.family, nu, value);
  return value;
}

GridRow aggregate_row(const GridSpec& spec, const Cell& cell, double theta,
                      double nu, const MethodSpec& method,
                      const std::vector<MethodOutcome>& outcomes) {
  GridRow row;
  row.setting = spec.setting;
  row.family = spec.family;
  row.cell = cell;
  row.theta = theta;
  row.nu = nu;
  row.method = method.name;
  row.n_reps = static_cast<int>(outcomes.size());
  int ok = 0, rejects = 0;
  double p_sum = 0.0, e_nx_sum = 0.0, e_ny_sum = 0.0;
  int e_count = 0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++row.failures;
      if (o.degenerate) ++row.degenerate_count;
      continue;
    }
    ++ok;
    rejects += o.reject ? 1 : 0;
    p_sum += o.p;
    if (std::isfinite(o.e_nx)) {
      e_nx_sum += o.e_nx;
      e_ny_sum += o.e_ny;
      ++e_count;
    }
  }
  if (row.failures > 0.01 * row.n_reps)
    throw ConvergenceError("more than 1% of replicates failed for method " +
                           method.name);
  const double r = ok > 0 ? static_cast<double>(rejects) / ok : 0.0;
  row.rejection_rate = r;
  row.mcse = ok > 0 ? std::sqrt(r * (1.0 - r) / ok) : 0.0;
  row.mean_p = ok > 0 ? p_sum / ok : 1.0;
  row.mean_e_nx = e_count > 0 ? e_nx_sum / e_count : 0.0;
  row.mean_e_ny = e_count > 0 ? e_ny_sum / e_count : 0.0;
  return row;
}

// Type-7 empirical quantile on a sorted vector.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  const std::size_t m = sorted.size();
  if (m == 0)
    throw InvalidInputError("quantile of an empty sample");
  if (m == 1) return sorted[0];
  const double pos = q * (m - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, m - 1);
  const double frac = pos - lo;
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

std::vector<GridRow> run_null_grid(const GridSpec& spec,
                                   CalibrationCache& cache, int workers) {
  const std::size_t n_methods = spec.methods.size();
  std::vector<GridRow> rows;
  for (std::size_t ci = 0; ci < spec.cells.size(); ++ci) {
    const Cell& cell = spec.cells[ci];
    const double nu_max = resolve_nu_max(spec, cell, cache, workers);
    const std::vector<double> nu_levels = {0.0, nu_max / 4, nu_max / 2,
                                           3 * nu_max / 4, nu_max};
    const std::size_t n_levels = nu_levels.size();
    const std::size_t tasks = n_levels * spec.n_reps;
    std::vector<std::vector<MethodOutcome>> slots(tasks);
    parallel_for(tasks, workers, [&](std::size_t t) {
      const std::size_t level = t / spec.n_reps;
      const std::size_t rep = t % spec.n_reps;
      ReplicateInput in;
      in.spec = &spec;
      in.truth = GroundTruth::make(cell.p, cell.s, cell.rho, nu_levels[level],
                                   0.0, spec.family, spec.binary_x);
      in.n = cell.n;
      in.cell_tag = cell_key(cell, spec.family);
      in.mode_tag = kModeNull;
      in.level = level;
      in.rep = rep;
      slots[t] = run_replicate(in);
    });
    for (std::size_t level = 0; level < n_levels; ++level) {
      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        std::vector<MethodOutcome> outcomes(spec.n_reps);
        for (int rep = 0; rep < spec.n_reps; ++rep)
          outcomes[rep] = slots[level * spec.n_reps + rep][mi];
        rows.push_back(aggregate_row(spec, cell, 0.0, nu_levels[level],
                                     spec.methods[mi], outcomes));
      }
    }
  }
  cache.save();
  return rows;
}

std::vector<GridRow> run_power_grid(const GridSpec& spec,
                                    CalibrationCache& cache, int workers) {
  const std::size_t n_methods = spec.methods.size();
  std::vector<GridRow> rows;
  for (std::size_t ci = 0; ci < spec.cells.size(); ++ci) {
    const Cell& cell = spec.cells[ci];
    const double nu_max = resolve_nu_max(spec, cell, cache, workers);
    const double nu = nu_max / 2;
    const double theta_max = resolve_theta_max(spec, cell, nu, cache, workers);
    const std::vector<double> theta_levels = {0.0, theta_max / 4,
                                              theta_max / 2, 3 * theta_max / 4,
                                              theta_max};
    const std::size_t n_levels = theta_levels.size();

    // phase A: point-null statistics for the oracle calibration
    const std::size_t cal_tasks = n_levels * spec.n_cal;
    std::vector<std::vector<MethodOutcome>> cal_slots(cal_tasks);
    parallel_for(cal_tasks, workers, [&](std::size_t t) {
      const std::size_t level = t / spec.n_cal;
      const std::size_t rep = t % spec.n_cal;
      ReplicateInput in;
      in.spec = &spec;
      in.truth = GroundTruth::make(cell.p, cell.s, cell.rho, nu,
                                   theta_levels[level], spec.family,
                                   spec.binary_x);
      in.n = cell.n;
      in.cell_tag = cell_key(cell, spec.family);
      in.mode_tag = kModePowerCal;
      in.level = level;
      in.rep = rep;
      in.point_null = true;
      in.statistics_only = true;
      cal_slots[t] = run_replicate(in);
    });

    // phase B: per-method 2.5%/97.5% critical values at each theta
    std::vector<std::vector<std::pair<double, double>>> cutoffs(
        n_levels, std::vector<std::pair<double, double>>(n_methods));
    for (std::size_t level = 0; level < n_levels; ++level) {
      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        std::vector<double> stats;
        stats.reserve(spec.n_cal);
        int failures = 0;
        for (int rep = 0; rep < spec.n_cal; ++rep) {
          const MethodOutcome& o = cal_slots[level * spec.n_cal + rep][mi];
          if (o.ok && std::isfinite(o.statistic)) {
            stats.push_back(o.statistic);
          } else {
            ++failures;
          }
        }
        if (failures > 0.01 * spec.n_cal)
          throw ConvergenceError(
              "more than 1% of calibration replicates failed for method " +
              spec.methods[mi].name);
        std::sort(stats.begin(), stats.end());
        cutoffs[level][mi] = {sorted_quantile(stats, spec.alpha / 2),
                              sorted_quantile(stats, 1.0 - spec.alpha / 2)};
      }
    }

    // phase C: rejection rates under the alternative
    const std::size_t tasks = n_levels * spec.n_reps;
    std::vector<std::vector<MethodOutcome>> slots(tasks);
    parallel_for(tasks, workers, [&](std::size_t t) {
      const std::size_t level = t / spec.n_reps;
      const std::size_t rep = t % spec.n_reps;
      ReplicateInput in;
      in.spec = &spec;
      in.truth = GroundTruth::make(cell.p, cell.s, cell.rho, nu,
                                   theta_levels[level], spec.family,
                                   spec.binary_x);
      in.n = cell.n;
      in.cell_tag = cell_key(cell, spec.family);
      in.mode_tag = kModePowerEval;
      in.level = level;
      in.rep = rep;
      in.statistics_only = true;
      slots[t] = run_replicate(in);
    });
    for (std::size_t level = 0; level < n_levels; ++level) {
      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        std::vector<MethodOutcome> outcomes(spec.n_reps);
        for (int rep = 0; rep < spec.n_reps; ++rep) {
          MethodOutcome o = slots[level * spec.n_reps + rep][mi];
          if (o.ok) {
            const auto [lo, hi] = cutoffs[level][mi];
            o.reject = o.statistic < lo || o.statistic > hi;
          }
          outcomes[rep] = o;
        }
        rows.push_back(aggregate_row(spec, cell, theta_levels[level], nu,
                                     spec.methods[mi], outcomes));
      }
    }
  }
  cache.save();
  return rows;
}

namespace {

// shortest decimal form that round-trips the double
std::string csv_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_grid_csv(const std::vector<GridRow>& rows, std::ostream& out) {
  out << "setting,family,n,p,s,rho,theta,nu,method,n_reps,rejection_rate,"
         "mcse,mean_p,failures\n";
  for (const auto& r : rows) {
    out << setting_name(r.setting) << ',' << family_name(r.family) << ','
        << r.cell.n << ',' << r.cell.p << ',' << r.cell.s << ','
        << csv_double(r.cell.rho) << ',' << csv_double(r.theta) << ','
        << csv_double(r.nu) << ",\"" << r.method << "\"," << r.n_reps << ','
        << csv_double(r.rejection_rate) << ',' << csv_double(r.mcse) << ','
        << csv_double(r.mean_p) << ',' << r.failures << '\n';
  }
}

// ---------------------------------------------------------------------------
// stylized shrinkage demonstration
// ---------------------------------------------------------------------------

std::vector<NegativeResultRow> negative_result_demo(
    const std::vector<double>& c_values, int n, int reps, double beta_norm_sq,
    double alpha, std::uint64_t seed, int workers) {
  if (n < 2 || reps < 1)
    throw InvalidInputError("negative_result_demo needs n >= 2, reps >= 1");
  const double z_crit = std_normal_quantile(1.0 - alpha);
  std::vector<NegativeResultRow> rows;
  for (std::size_t ci = 0; ci < c_values.size(); ++ci) {
    const double c = c_values[ci];
    std::vector<char> reject(reps, 0);
    parallel_for(static_cast<std::size_t>(reps), workers, [&](std::size_t r) {
      Rng rng = make_rng(seed, {0x3E6ULL, ci, r});
      // the statistic depends on the data only through u = z'beta ~
      // N(0, |beta|^2); represent z by that single column
      Dataset ds;
      ds.family = Family::gaussian;
      ds.z.resize(n, 1);
      fill_std_normal(rng, ds.z.col(0).data(), n);
      ds.z.col(0) *= std::sqrt(beta_norm_sq);
      ds.x.resize(n);
      fill_std_normal(rng, ds.x.data(), n);
      ds.x += ds.z.col(0);
      ds.y.resize(n);
      fill_std_normal(rng, ds.y.data(), n);
      ds.y += ds.z.col(0);

      MeanModel shrunk;
      shrunk.family = Family::gaussian;
      shrunk.coefficients = Eigen::VectorXd::Constant(
          1, 1.0 - c / std::sqrt(static_cast<double>(n)));
      shrunk.active_set = {0};
      MeanModel zero_y;
      zero_y.family = Family::gaussian;
      zero_y.coefficients = Eigen::VectorXd::Zero(1);

      CondLawX law;
      law.mean = shrunk;
      law.variance = VarianceEstimator::constant(1.0);
      law.sampler = SamplerKind::gaussian;
      reject[r] = mx2_f_test(ds, law, zero_y, alpha).reject ? 1 : 0;
    });
    double total = 0.0;
    for (char v : reject) total += v;
    NegativeResultRow row;
    row.c = c;
    row.empirical = total / reps;
    row.limit = 1.0 - std_normal_cdf(
                          z_crit - c * beta_norm_sq /
                                       std::sqrt(beta_norm_sq + 1.0));
    row.mcse = std::sqrt(row.empirical * (1.0 - row.empirical) / reps);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// marginal-association audit
// ---------------------------------------------------------------------------

LitDesign lit_design_from_name(const std::string& name) {
  if (name == "candes2016-like") return LitDesign::candes2016_like;
  if (name == "liu2022-like") return LitDesign::liu2022_like;
  if (name == "li2022-like") return LitDesign::li2022_like;
  throw InvalidInputError("unknown design: " + name);
}

LitDesignParams default_design_params(LitDesign kind) {
  LitDesignParams d;
  d.kind = kind;
  switch (kind) {
    case LitDesign::liu2022_like:
      d.n = 800;
      d.p = 800;
      d.s = 50;
      d.rho = 0.5;
      d.nu = 0.175;
      d.placement = SignalPlacement::equally_spaced;
      break;
    case LitDesign::candes2016_like:
      d.n = 800;
      d.p = 1500;
      d.s = 50;
      d.rho = 0.3;
      d.nu = 20.0;
      d.placement = SignalPlacement::random_positions;
      break;
    case LitDesign::li2022_like:
      d.n = 250;
      d.p = 500;
      d.s = 5;
      d.rho = 0.5;
      d.nu = 0.3;
      d.placement = SignalPlacement::first_block;
      break;
  }
  return d;
}

namespace {

// Signal positions are drawn once so the per-variable profile lines up
// across replicates; signs are redrawn per replicate.
std::vector<int> make_signal_positions(const LitDesignParams& d, Rng& rng) {
  std::vector<int> positions;
  switch (d.placement) {
    case SignalPlacement::first_block:
      for (int j = 0; j < d.s; ++j) positions.push_back(j);
      break;
    case SignalPlacement::equally_spaced:
      for (int j = 0; j < d.s; ++j)
        positions.push_back(static_cast<int>(
            std::llround(static_cast<double>(j) * d.p / d.s)));
      break;
    case SignalPlacement::random_positions: {
      std::vector<int> all(d.p);
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng);
      positions.assign(all.begin(), all.begin() + d.s);
      std::sort(positions.begin(), positions.end());
      break;
    }
  }
  return positions;
}

std::vector<double> draw_signs(const LitDesignParams& d, Rng& rng) {
  std::vector<double> signs(d.s, 1.0);
  if (d.random_signs) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int j = 0; j < d.s; ++j) signs[j] = unif(rng) < 0.5 ? -1.0 : 1.0;
  }
  return signs;
}

// two-sided marginal GCM statistic for one centered pair
bool marginal_reject(const double* rxj, const double* ry, int n,
                     double z_crit) {
  const auto pm =
      kernels::product_moments(rxj, ry, static_cast<std::size_t>(n));
  const double mean = pm.sum / n;
  const double var = pm.sum_sq / n - mean * mean;
  if (var < 1e-24) return false;
  const double t = (pm.sum / std::sqrt(static_cast<double>(n))) /
                   std::sqrt(var);
  return std::abs(t) > z_crit;
}

}  // namespace

std::vector<MarginalProfileRow> marginal_association_profile(
    const LitDesignParams& params, int reps, double alpha, std::uint64_t seed,
    int workers) {
  if (reps < 1) throw InvalidInputError("audit needs reps >= 1");
  const double z_crit = std_normal_quantile(1.0 - alpha / 2);
  Rng pattern_rng = make_rng(seed, {0xD51ULL});
  const std::vector<int> positions = make_signal_positions(params, pattern_rng);
  std::vector<char> is_signal(params.p, 0);
  for (int j : positions) is_signal[j] = 1;

  if (params.kind == LitDesign::li2022_like) {
    // single tested variable: x = z'gamma + eps, y = z'gamma + xi
    std::vector<char> reject(reps, 0);
    parallel_for(static_cast<std::size_t>(reps), workers, [&](std::size_t r) {
      Rng rng = make_rng(seed, {0xD52ULL, r});
      const std::vector<double> signs = draw_signs(params, rng);
      const Eigen::MatrixXd z =
          sample_ar1_gaussian(params.n, params.p, params.rho, rng);
      Eigen::VectorXd u = Eigen::VectorXd::Zero(params.n);
      for (int k = 0; k < params.s; ++k)
        u += params.nu * signs[k] * z.col(positions[k]);
      Eigen::VectorXd x(params.n), y(params.n);
      fill_std_normal(rng, x.data(), params.n);
      fill_std_normal(rng, y.data(), params.n);
      x += u;
      y += u;
      const Eigen::VectorXd rx = x.array() - x.mean();
      const Eigen::VectorXd ry = y.array() - y.mean();
      reject[r] =
          marginal_reject(rx.data(), ry.data(), params.n, z_crit) ? 1 : 0;
    });
    double total = 0.0;
    for (char v : reject) total += v;
    MarginalProfileRow row;
    row.variable = 0;
    row.rejection_rate = total / reps;
    row.mcse = std::sqrt(row.rejection_rate * (1.0 - row.rejection_rate) /
                         reps);
    row.is_signal = false;
    return {row};
  }

  // per-variable profile over the W matrix designs
  std::vector<std::vector<char>> rejects(
      reps, std::vector<char>(params.p, 0));
  parallel_for(static_cast<std::size_t>(reps), workers, [&](std::size_t r) {
    Rng rng = make_rng(seed, {0xD53ULL, r});
    const std::vector<double> signs = draw_signs(params, rng);
    Eigen::MatrixXd w =
        sample_ar1_gaussian(params.n, params.p, params.rho, rng);
    Eigen::VectorXd y(params.n);
    if (params.kind == LitDesign::candes2016_like) {
      // centered, unit-norm columns feed a logistic response
      for (int j = 0; j < params.p; ++j) {
        w.col(j).array() -= w.col(j).mean();
        const double norm = w.col(j).norm();
        if (norm > 0) w.col(j) /= norm;
      }
      Eigen::VectorXd eta = Eigen::VectorXd::Zero(params.n);
      for (int k = 0; k < params.s; ++k)
        eta += params.nu * signs[k] * w.col(positions[k]);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (int i = 0; i < params.n; ++i)
        y[i] = unif(rng) < logistic(eta[i]) ? 1.0 : 0.0;
    } else {
      Eigen::VectorXd eta = Eigen::VectorXd::Zero(params.n);
      for (int k = 0; k < params.s; ++k)
        eta += params.nu * signs[k] * w.col(positions[k]);
      fill_std_normal(rng, y.data(), params.n);
      y += eta;
    }
    const Eigen::VectorXd ry = y.array() - y.mean();
    Eigen::VectorXd rxj(params.n);
    for (int j = 0; j < params.p; ++j) {
      rxj = w.col(j).array() - w.col(j).mean();
      rejects[r][j] =
          marginal_reject(rxj.data(), ry.data(), params.n, z_crit) ? 1 : 0;
    }
  });

  std::vector<MarginalProfileRow> rows(params.p);
  for (int j = 0; j < params.p; ++j) {
    double total = 0.0;
    for (int r = 0; r < reps; ++r) total += rejects[r][j];
    rows[j].variable = j;
    rows[j].rejection_rate = total / reps;
    rows[j].mcse = std::sqrt(rows[j].rejection_rate *
                             (1.0 - rows[j].rejection_rate) / reps);
    rows[j].is_signal = is_signal[j] != 0;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// lasso vs post-lasso estimation error
// ---------------------------------------------------------------------------

MseSummary mse_shared_vs_total(int n, int p, int s, double rho, double nu,
                               int reps, std::uint64_t seed, int workers) {
  if (reps < 2) throw InvalidInputError("mse comparison needs reps >= 2");
  struct RepResult {
    double lasso_shared[2], lasso_total[2];
    double plasso_shared[2], plasso_total[2];
    bool ok = false;
  };
  std::vector<RepResult> results(reps);
  parallel_for(static_cast<std::size_t>(reps), workers, [&](std::size_t r) {
    Rng rng = make_rng(seed, {0x53EULL, r});
    const GroundTruth truth =
        GroundTruth::make(p, s, rho, nu, 0.0, Family::gaussian);
    const Dataset ds = generate_dataset(truth, n, rng);
    const Eigen::MatrixXd z_shared = ds.z.leftCols(s);
    const Eigen::VectorXd true_shared = z_shared * truth.coef_x.head(s);
    const Eigen::VectorXd true_total = ds.z * truth.coef_x;

    // fitted linear predictor restricted to the shared active coordinates
    auto shared_predictor = [&](const MeanModel& m) {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
      for (int j : m.active_set) {
        if (j < s)
          kernels::axpy(m.coefficients[j], ds.z.col(j).data(), out.data(),
                        static_cast<std::size_t>(n));
      }
      return out;
    };

    RepResult res;
    for (int which = 0; which < 2; ++which) {
      const Eigen::VectorXd& target = which == 0 ? ds.x : ds.y;
      Rng fold_rng = make_rng(seed, {0x53FULL, r, static_cast<std::uint64_t>(which)});
      const LassoCvFit sel =
          lasso_cv(ds.z, target, Family::gaussian, 5, 100, fold_rng);
      const MeanModel plasso =
          sel.model.active_set.empty()
              ? fit_intercept_only(target, Family::gaussian)
              : refit_on_support(ds.z, target, Family::gaussian,
                                 sel.model.active_set)
                    .model;
      res.lasso_shared[which] =
          (shared_predictor(sel.model) - true_shared).squaredNorm() / n;
      res.plasso_shared[which] =
          (shared_predictor(plasso) - true_shared).squaredNorm() / n;
      res.lasso_total[which] =
          (sel.model.linear_predictor(ds.z) - true_total).squaredNorm() / n;
      res.plasso_total[which] =
          (plasso.linear_predictor(ds.z) - true_total).squaredNorm() / n;
    }
    res.ok = true;
    results[r] = res;
  });

  MseSummary out;
  out.reps = reps;
  std::vector<double> shared_diffs, total_diffs;
  for (const auto& res : results) {
    if (!res.ok) continue;
    out.lasso_shared_x += res.lasso_shared[0] / reps;
    out.lasso_shared_y += res.lasso_shared[1] / reps;
    out.plasso_shared_x += res.plasso_shared[0] / reps;
    out.plasso_shared_y += res.plasso_shared[1] / reps;
    out.lasso_total_x += res.lasso_total[0] / reps;
    out.lasso_total_y += res.lasso_total[1] / reps;
    out.plasso_total_x += res.plasso_total[0] / reps;
    out.plasso_total_y += res.plasso_total[1] / reps;
    shared_diffs.push_back(
        0.5 * (res.plasso_shared[0] - res.lasso_shared[0] +
               res.plasso_shared[1] - res.lasso_shared[1]));
    total_diffs.push_back(0.5 * (res.plasso_total[0] - res.lasso_total[0] +
                                 res.plasso_total[1] - res.lasso_total[1]));
  }
  auto mean_se = [](const std::vector<double>& v) {
    const double m =
        std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double d : v) ss += (d - m) * (d - m);
    const double se = std::sqrt(ss / (v.size() - 1) / v.size());
    return std::make_pair(m, se);
  };
  std::tie(out.shared_diff, out.shared_diff_se) = mean_se(shared_diffs);
  std::tie(out.total_diff, out.total_diff_se) = mean_se(total_diffs);
  return out;
}

}  // namespace citest
