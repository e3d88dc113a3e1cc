#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "citest/diagnostics.hpp"
#include "citest/errors.hpp"
#include "citest/parallel.hpp"
#include "citest/sim.hpp"
#include "citest/testing.hpp"
#include "json.hpp"

// citest: conditional-independence testing and simulation harness.
// JSON objects / CSV tables go to stdout, logs to stderr.
// Exit codes: 0 success, 2 usage or input error, 3 statistical degeneracy,
// 4 convergence failure.

namespace {

using citest::Family;
using citest::Rng;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitConvergence = 4;

std::string cache_path() {
  const char* dir = std::getenv("CITEST_CACHE_DIR");
  const std::string base = dir != nullptr ? dir : ".";
  return base + "/citest_calibration.json";
}

bool all_binary(const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0 && v[i] != 1.0) return false;
  return true;
}

citest::MeanModel fit_mean(const citest::Dataset& ds, citest::MeanKind kind,
                           bool for_x, int folds, std::uint64_t seed) {
  const Eigen::VectorXd& target = for_x ? ds.x : ds.y;
  const Family family = for_x
                            ? (all_binary(ds.x) ? Family::binomial
                                                : Family::gaussian)
                            : ds.family;
  Rng rng = citest::make_rng(seed, {for_x ? 11ULL : 12ULL});
  switch (kind) {
    case citest::MeanKind::intercept_only:
      return citest::fit_intercept_only(target, family);
    case citest::MeanKind::lasso:
      return citest::fit_lasso_cv(ds.z, target, family, folds, 100, rng);
    case citest::MeanKind::post_lasso:
      return citest::fit_post_lasso(ds.z, target, family, folds, rng);
    case citest::MeanKind::oracle:
      throw citest::InvalidInputError(
          "oracle method needs ground truth; not available for file input");
  }
  throw citest::InvalidInputError("unknown mean kind");
}

int cmd_test(const std::string& csv_path, const std::string& method_name,
             double alpha, std::uint64_t seed, int resamples, int folds,
             bool two_sided) {
  std::ifstream in(csv_path);
  if (!in.good())
    throw citest::InvalidInputError("cannot open CSV: " + csv_path);
  const citest::Dataset ds = citest::read_dataset_csv(in);
  const citest::MethodSpec method =
      citest::method_by_name(method_name, resamples);
  const citest::Sidedness sides = two_sided ? citest::Sidedness::two_sided
                                            : citest::Sidedness::one_sided;

  citest::TestResult result;
  if (method.test == citest::TestKind::maxway) {
    Rng rng = citest::make_rng(seed, {21ULL});
    result = citest::maxway_crt_supervised(ds, resamples, alpha, rng);
  } else {
    const citest::MeanModel mx = fit_mean(ds, method.mean_x, true, folds, seed);
    const citest::MeanModel my =
        fit_mean(ds, method.mean_y, false, folds, seed);
    if (method.test == citest::TestKind::gcm) {
      result = citest::gcm_test(ds, mx, my, alpha, sides);
    } else {
      citest::CondLawX law;
      law.mean = mx;
      if (all_binary(ds.x)) {
        law.variance = citest::VarianceEstimator::bernoulli();
        law.sampler = citest::SamplerKind::bernoulli;
      } else {
        law.variance = citest::VarianceEstimator::residual_squared();
        law.sampler = citest::SamplerKind::gaussian;
      }
      Rng rng = citest::make_rng(seed, {22ULL});
      result = citest::dcrt_hat(ds, law, my, resamples, alpha, rng, sides);
    }
  }
  result.method = method.name;
  nlohmann::json out = result.to_json();
  out["diagnostics"].erase("resample_statistics");
  std::cout << out.dump() << "\n";
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path,
                 std::uint64_t seed, bool seed_given, int workers, bool fast) {
  nlohmann::json config = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in.good())
      throw citest::InvalidInputError("cannot open config: " + config_path);
    try {
      in >> config;
    } catch (const nlohmann::json::exception& e) {
      throw citest::InvalidInputError(std::string("bad config JSON: ") +
                                      e.what());
    }
  }
  citest::GridSpec spec = citest::grid_spec_from_json(config);
  if (seed_given) spec.seed = seed;
  if (fast) {
    spec.n_reps = 100;
    spec.cells = {citest::default_cell()};
  }
  citest::CalibrationCache cache(cache_path());
  const std::vector<citest::GridRow> rows =
      spec.mode == citest::GridSpec::Mode::power_grid
          ? citest::run_power_grid(spec, cache, workers)
          : citest::run_null_grid(spec, cache, workers);
  std::ofstream out(out_path);
  if (!out.good())
    throw citest::InvalidInputError("cannot write output: " + out_path);
  citest::write_grid_csv(rows, out);
  if (!out.good())
    throw citest::InvalidInputError("write failed: " + out_path);
  std::cerr << "wrote " << rows.size() << " rows to " << out_path << "\n";
  return kExitOk;
}

int cmd_calibrate(int n, int p, int s, double rho, double nu,
                  const std::string& family_name, const std::string& target,
                  int reps, std::uint64_t seed, int workers) {
  const Family family = citest::family_from_name(family_name);
  citest::CalibrationCache cache(cache_path());
  const citest::Cell cell{n, p, s, rho};
  nlohmann::json out;
  if (target == "nu" || target == "both") {
    citest::CalibrationRecord rec;
    const double value = citest::calibrate_nu_max(n, p, s, rho, family, reps,
                                                  seed, workers, &rec);
    cache.store_nu_max(cell, family, value);
    out["nu_max"] = value;
    out["nu_max_bracket"] = {{"lo", rec.bracket_lo},
                             {"hi", rec.bracket_hi},
                             {"evaluations", rec.evaluations}};
  }
  if (target == "theta" || target == "both") {
    double nu_used = nu;
    if (nu_used < 0.0) {
      if (auto cached = cache.nu_max(cell, family)) {
        nu_used = *cached / 2;
      } else {
        throw citest::InvalidInputError(
            "theta calibration needs --nu or a cached nu_max");
      }
    }
    citest::CalibrationRecord rec;
    const double value = citest::calibrate_theta_max(
        n, p, s, rho, nu_used, family, reps, seed, workers, &rec);
    cache.store_theta_max(cell, family, nu_used, value);
    out["theta_max"] = value;
    out["theta_nu"] = nu_used;
    out["theta_max_bracket"] = {{"lo", rec.bracket_lo},
                                {"hi", rec.bracket_hi},
                                {"evaluations", rec.evaluations}};
  }
  cache.save();
  std::cout << out.dump() << "\n";
  return kExitOk;
}

int cmd_demo_negative(const std::vector<double>& c_values, int n, int reps,
                      double beta_norm_sq, double alpha, std::uint64_t seed,
                      int workers) {
  const auto rows = citest::negative_result_demo(c_values, n, reps,
                                                 beta_norm_sq, alpha, seed,
                                                 workers);
  std::cout << "c,empirical_rate,closed_form_limit,mcse\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", r.c,
                  r.empirical, r.limit, r.mcse);
    std::cout << buf;
  }
  return kExitOk;
}

int cmd_audit_marginal(const std::string& design, int reps, double alpha,
                       std::uint64_t seed, int workers, int n_override,
                       double rho_override, double nu_override) {
  citest::LitDesignParams params =
      citest::default_design_params(citest::lit_design_from_name(design));
  if (n_override > 0) params.n = n_override;
  if (rho_override >= 0.0) params.rho = rho_override;
  if (nu_override >= 0.0) params.nu = nu_override;
  const auto rows =
      citest::marginal_association_profile(params, reps, alpha, seed, workers);
  std::cout << "variable,rejection_rate,mcse,is_signal\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d\n", r.variable,
                  r.rejection_rate, r.mcse, r.is_signal ? 1 : 0);
    std::cout << buf;
  }
  return kExitOk;
}

int cmd_mse_compare(int n, int p, int s, double rho, double nu, int reps,
                    std::uint64_t seed, int workers) {
  const citest::MseSummary t =
      citest::mse_shared_vs_total(n, p, s, rho, nu, reps, seed, workers);
  std::cout << "estimator,target,shared_mse,total_mse\n";
  char buf[200];
  std::snprintf(buf, sizeof(buf), "lasso,x,%.17g,%.17g\n", t.lasso_shared_x,
                t.lasso_total_x);
  std::cout << buf;
  std::snprintf(buf, sizeof(buf), "post_lasso,x,%.17g,%.17g\n",
                t.plasso_shared_x, t.plasso_total_x);
  std::cout << buf;
  std::snprintf(buf, sizeof(buf), "lasso,y,%.17g,%.17g\n", t.lasso_shared_y,
                t.lasso_total_y);
  std::cout << buf;
  std::snprintf(buf, sizeof(buf), "post_lasso,y,%.17g,%.17g\n",
                t.plasso_shared_y, t.plasso_total_y);
  std::cout << buf;
  std::cerr << "paired shared diff (post-lasso - lasso): " << t.shared_diff
            << " +- " << t.shared_diff_se << "\n";
  std::cerr << "paired total diff (post-lasso - lasso): " << t.total_diff
            << " +- " << t.total_diff_se << "\n";
  return kExitOk;
}

int cmd_check_theory(const std::string& selector, std::uint64_t seed,
                     int workers, bool fast) {
  const int scale = fast ? 4 : 1;
  std::vector<citest::TheoryCheckReport> reports;
  auto want = [&](const std::string& name) {
    return selector == "all" || selector == name;
  };
  bool known = selector == "all" || selector == "negative-controls";

  if (want("critical-value")) {
    known = true;
    reports.push_back(citest::check_critical_value_convergence(
        {250, 1000, 4000}, 8000, 48 / scale + (fast ? 4 : 0), seed, workers));
  }
  if (want("variance-equivalence")) {
    known = true;
    reports.push_back(citest::check_variance_equivalence(
        {250, 1000, 2000}, 100 / scale, seed, workers));
  }
  if (want("agreement")) {
    known = true;
    reports.push_back(
        citest::check_test_agreement(2000, 200 / scale, seed, workers));
  }
  if (want("power")) {
    known = true;
    reports.push_back(citest::check_optimal_power({1.0, 2.0, 3.0}, 2000,
                                                  5000 / scale, seed,
                                                  workers));
  }
  citest::ConditionalCheckConfig cfg;
  cfg.seed = seed;
  cfg.workers = workers;
  if (fast) {
    cfg.inner_reps = 400;
    cfg.outer_draws = 8;
    cfg.n = 2000;
  }
  if (want("conditional-clt")) {
    known = true;
    reports.push_back(citest::check_conditional_clt(cfg));
  }
  if (want("conditional-wlln")) {
    known = true;
    auto wcfg = cfg;
    wcfg.inner_reps = fast ? 200 : 400;
    reports.push_back(citest::check_conditional_wlln(wcfg));
  }
  if (want("quantile")) {
    known = true;
    auto qcfg = cfg;
    qcfg.inner_reps = fast ? 2000 : 4000;
    qcfg.outer_draws = fast ? 16 : 32;
    reports.push_back(citest::check_quantile_convergence(qcfg));
  }
  if (selector == "negative-controls") {
    auto ncfg = cfg;
    ncfg.negative_control = true;
    reports.push_back(citest::check_conditional_clt(ncfg));
    auto wcfg = ncfg;
    wcfg.inner_reps = fast ? 200 : 400;
    reports.push_back(citest::check_conditional_wlln(wcfg));
    auto qcfg = ncfg;
    qcfg.inner_reps = fast ? 2000 : 4000;
    reports.push_back(citest::check_quantile_convergence(qcfg));
  }
  if (!known) {
    throw citest::InvalidInputError("unknown check selector: " + selector);
  }

  bool all_pass = true;
  for (const auto& rep : reports) {
    std::cout << rep.to_json().dump() << "\n";
    std::fprintf(stderr, "%-32s metric=%-12.5g threshold=%-10.5g %s\n",
                 rep.name.c_str(), rep.metric, rep.threshold,
                 rep.pass ? "PASS" : "FAIL");
    all_pass = all_pass && rep.pass;
  }
  return all_pass ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional independence testing and simulation harness"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 1;
  int workers = citest::default_workers();
  double alpha = 0.05;
  app.add_option("--seed", seed, "master seed; all randomness derives from it");
  app.add_option("--workers", workers, "worker threads for replicate fan-out");
  app.add_option("--alpha", alpha, "test level");

  auto* t = app.add_subcommand("test", "run one test on a CSV dataset");
  std::string csv_path, method = "gcm-lasso";
  int resamples = 400, folds = 5;
  bool two_sided = false;
  t->add_option("--csv", csv_path, "CSV with header x,y,z1..zp")->required();
  t->add_option("--method", method,
                "method name (Table roster or alias, e.g. gcm-lasso)");
  t->add_option("--resamples", resamples, "dCRT randomizations M");
  t->add_option("--folds", folds, "cross-validation folds");
  t->add_flag("--two-sided", two_sided, "two-sided decision");

  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo grid");
  std::string config_path, out_path = "grid.csv";
  bool fast = false;
  sim->add_option("--config", config_path, "grid config JSON");
  sim->add_option("--out", out_path, "output CSV path");
  sim->add_flag("--fast", fast, "100 reps, default cell only");

  auto* cal = app.add_subcommand("calibrate", "calibrate nu_max / theta_max");
  int cal_n = 200, cal_p = 400, cal_s = 5, cal_reps = 800;
  double cal_rho = 0.4, cal_nu = -1.0;
  std::string cal_family = "gaussian", cal_target = "both";
  cal->add_option("--n", cal_n);
  cal->add_option("--p", cal_p);
  cal->add_option("--s", cal_s);
  cal->add_option("--rho", cal_rho);
  cal->add_option("--nu", cal_nu, "nu for theta calibration (default nu_max/2)");
  cal->add_option("--family", cal_family);
  cal->add_option("--target", cal_target, "nu | theta | both");
  cal->add_option("--reps", cal_reps, "Monte Carlo size per evaluation");

  auto* neg = app.add_subcommand("demo-negative",
                                 "shrinkage bias vs closed-form limit");
  std::vector<double> c_values = {0.0, 1.0, 2.0, 4.0};
  int neg_n = 5000, neg_reps = 10000;
  double beta_norm_sq = 1.0;
  neg->add_option("--c", c_values, "shrinkage scales");
  neg->add_option("--n", neg_n);
  neg->add_option("--reps", neg_reps);
  neg->add_option("--beta-norm-sq", beta_norm_sq);

  auto* audit = app.add_subcommand("audit-marginal",
                                   "per-variable marginal association audit");
  std::string design = "liu2022-like";
  int audit_reps = 400, audit_n = -1;
  double audit_rho = -1.0, audit_nu = -1.0;
  audit->add_option("--design", design,
                    "candes2016-like | liu2022-like | li2022-like");
  audit->add_option("--reps", audit_reps);
  audit->add_option("--n", audit_n, "override design n");
  audit->add_option("--rho", audit_rho, "override design rho");
  audit->add_option("--nu", audit_nu, "override design nu");

  auto* mse = app.add_subcommand("mse-compare",
                                 "lasso vs post-lasso estimation error");
  int mse_n = 100, mse_p = 400, mse_s = 5, mse_reps = 200;
  double mse_rho = 0.4, mse_nu = 0.3;
  mse->add_option("--n", mse_n);
  mse->add_option("--p", mse_p);
  mse->add_option("--s", mse_s);
  mse->add_option("--rho", mse_rho);
  mse->add_option("--nu", mse_nu);
  mse->add_option("--reps", mse_reps);

  auto* chk = app.add_subcommand("check-theory", "numerical theory checks");
  std::string selector = "all";
  bool chk_fast = false;
  chk->add_option("--selector", selector,
                  "all | critical-value | variance-equivalence | agreement | "
                  "power | conditional-clt | conditional-wlln | quantile | "
                  "negative-controls");
  chk->add_flag("--fast", chk_fast, "reduced Monte Carlo sizes");

  bool seed_given = false;
  try {
    app.parse(argc, argv);
    seed_given = app.count("--seed") > 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*t)
      return cmd_test(csv_path, method, alpha, seed, resamples, folds,
                      two_sided);
    if (*sim)
      return cmd_simulate(config_path, out_path, seed, seed_given, workers,
                          fast);
    if (*cal)
      return cmd_calibrate(cal_n, cal_p, cal_s, cal_rho, cal_nu, cal_family,
                           cal_target, cal_reps, seed, workers);
    if (*neg)
      return cmd_demo_negative(c_values, neg_n, neg_reps, beta_norm_sq, alpha,
                               seed, workers);
    if (*audit)
      return cmd_audit_marginal(design, audit_reps, alpha, seed, workers,
                                audit_n, audit_rho, audit_nu);
    if (*mse)
      return cmd_mse_compare(mse_n, mse_p, mse_s, mse_rho, mse_nu, mse_reps,
                             seed, workers);
    if (*chk) return cmd_check_theory(selector, seed, workers, chk_fast);
  } catch (const citest::DegenerateVarianceError& e) {
    std::cerr << "degenerate variance: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const citest::ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const citest::InvalidInputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
