#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "citest/core_model.hpp"
#include "citest/testing.hpp"
#include "json.hpp"

namespace citest {

enum class Setting { supervised, semi_supervised };
const char* setting_name(Setting s);
Setting setting_from_name(const std::string& name);

enum class MeanKind { oracle, intercept_only, lasso, post_lasso };
enum class TestKind { gcm, dcrt, maxway };

struct MethodSpec {
  std::string name;
  TestKind test = TestKind::gcm;
  MeanKind mean_x = MeanKind::lasso;
  MeanKind mean_y = MeanKind::lasso;
  int resamples = 400;
};

// Table-2 roster: lasso and post-lasso GCM/dCRT-hat, Maxway CRT, and the
// marginal / oracle GCM reference rows.
std::vector<MethodSpec> default_method_roster(int dcrt_resamples);

// Accepts a roster name ("dCRT-hat (LASSO)") or its CLI alias ("dcrt-lasso").
MethodSpec method_by_name(const std::string& name, int dcrt_resamples);

struct Cell {
  int n = 200;
  int p = 400;
  int s = 5;
  double rho = 0.4;
};

Cell default_cell();
// One-at-a-time sweeps of each design axis around the default cell.
std::vector<Cell> default_grid_cells();

struct GridSpec {
  enum class Mode { null_grid, power_grid };
  Mode mode = Mode::null_grid;
  Family family = Family::gaussian;
  Setting setting = Setting::supervised;
  bool binary_x = false;
  std::vector<Cell> cells = {default_cell()};
  std::vector<MethodSpec> methods;
  int n_reps = 400;
  double alpha = 0.05;
  int dcrt_resamples = 400;
  int n_cal = 2000;            // point-null replicates for power calibration
  int calibration_reps = 800;  // per bisection evaluation
  int lasso_folds = 5;
  int lambda_grid = 100;
  std::uint64_t seed = 1;
  // fixed scales bypass calibration when set
  double nu_max_override = -1.0;
  double theta_max_override = -1.0;
};

GridSpec grid_spec_from_json(const nlohmann::json& config);

struct GridRow {
  Setting setting;
  Family family;
  Cell cell;
  double theta = 0.0;
  double nu = 0.0;
  std::string method;
  int n_reps = 0;
  double rejection_rate = 0.0;
  double mcse = 0.0;
  double mean_p = 0.0;
  int failures = 0;
  // diagnostics aggregates, not part of the CSV schema
  double mean_e_nx = 0.0;
  double mean_e_ny = 0.0;
  int degenerate_count = 0;
};

void write_grid_csv(const std::vector<GridRow>& rows, std::ostream& out);

struct CalibrationRecord {
  double value = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double rate_lo = 0.0;
  double rate_hi = 0.0;
  int evaluations = 0;
};

// Bisection for the nu at which the two-sided marginal GCM rejects 99% of
// null datasets. Exact-law evaluation: the marginal statistic depends on the
// data only through (u = z'beta, eps_x, eps_y) and u ~ N(0, beta'Sigma beta).
double calibrate_nu_max(int n, int p, int s, double rho, Family family,
                        int reps, std::uint64_t seed, int workers,
                        CalibrationRecord* record = nullptr);

// Bisection for the theta at which the two-sided oracle GCM has 99% power
// under the alternative, nu held fixed.
double calibrate_theta_max(int n, int p, int s, double rho, double nu,
                           Family family, int reps, std::uint64_t seed,
                           int workers, CalibrationRecord* record = nullptr);

// Monte Carlo rejection rate of the two-sided marginal GCM at the given nu
// (exact-law evaluation, shared random numbers across nu values).
double marginal_gcm_rejection_rate(int n, int s, double rho, double nu,
                                   Family family, int reps, std::uint64_t seed,
                                   int workers);
double oracle_gcm_power(int n, int s, double rho, double nu, double theta,
                        Family family, int reps, std::uint64_t seed,
                        int workers);

// JSON sidecar of calibrated scales keyed by the cell parameters.
class CalibrationCache {
 public:
  explicit CalibrationCache(std::string path);  // empty path: in-memory only

  std::optional<double> nu_max(const Cell& cell, Family family) const;
  std::optional<double> theta_max(const Cell& cell, Family family,
                                  double nu) const;
  void store_nu_max(const Cell& cell, Family family, double value);
  void store_theta_max(const Cell& cell, Family family, double nu,
                       double value);
  void save() const;

 private:
  std::string path_;
  nlohmann::json data_;
};

std::vector<GridRow> run_null_grid(const GridSpec& spec,
                                   CalibrationCache& cache, int workers);
std::vector<GridRow> run_power_grid(const GridSpec& spec,
                                    CalibrationCache& cache, int workers);

// Stylized shrinkage demonstration: explicit estimator (1 - c/sqrt(n)) beta
// with a zero model for E[y|z], against the closed-form limiting Type-I
// error 1 - Phi(z_{1-alpha} - c*B/sqrt(B+1)) for B = |beta|^2.
struct NegativeResultRow {
  double c = 0.0;
  double empirical = 0.0;
  double limit = 0.0;
  double mcse = 0.0;
};
std::vector<NegativeResultRow> negative_result_demo(
    const std::vector<double>& c_values, int n, int reps, double beta_norm_sq,
    double alpha, std::uint64_t seed, int workers);

// Literature-style designs for the per-variable marginal-association audit.
enum class LitDesign { candes2016_like, liu2022_like, li2022_like };
LitDesign lit_design_from_name(const std::string& name);

enum class SignalPlacement { first_block, equally_spaced, random_positions };

struct LitDesignParams {
  LitDesign kind = LitDesign::liu2022_like;
  int n = 800;
  int p = 800;
  int s = 50;
  double rho = 0.5;
  double nu = 0.175;
  bool random_signs = true;
  SignalPlacement placement = SignalPlacement::equally_spaced;
};
LitDesignParams default_design_params(LitDesign kind);

struct MarginalProfileRow {
  int variable = 0;
  double rejection_rate = 0.0;
  double mcse = 0.0;
  bool is_signal = false;
};
std::vector<MarginalProfileRow> marginal_association_profile(
    const LitDesignParams& params, int reps, double alpha, std::uint64_t seed,
    int workers);

// Paired comparison of lasso vs post-lasso in-sample estimation error on the
// shared active coordinates and on all coordinates.
struct MseSummary {
  double lasso_shared_x = 0.0, lasso_total_x = 0.0;
  double plasso_shared_x = 0.0, plasso_total_x = 0.0;
  double lasso_shared_y = 0.0, lasso_total_y = 0.0;
  double plasso_shared_y = 0.0, plasso_total_y = 0.0;
  // paired mean differences (post-lasso minus lasso), pooled over x and y
  double shared_diff = 0.0, shared_diff_se = 0.0;
  double total_diff = 0.0, total_diff_se = 0.0;
  int reps = 0;
};
MseSummary mse_shared_vs_total(int n, int p, int s, double rho, double nu,
                               int reps, std::uint64_t seed, int workers);

}  // namespace citest
