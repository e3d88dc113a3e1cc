#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <sstream>

#include "citest/errors.hpp"
#include "citest/parallel.hpp"
#include "citest/core_model.hpp"
#include "citest/sim.hpp"
#include "doctest.h"

using namespace citest;

namespace {

GridSpec tiny_spec(GridSpec::Mode mode) {
  GridSpec spec;
  spec.mode = mode;
  spec.cells = {Cell{80, 30, 3, 0.4}};
  spec.methods = {method_by_name("GCM (oracle)", 50),
                  method_by_name("gcm-marginal", 50),
                  method_by_name("dcrt-lasso", 50)};
  spec.n_reps = 24;
  spec.n_cal = 60;
  spec.calibration_reps = 500;
  spec.dcrt_resamples = 50;
  spec.seed = 31;
  return spec;
}

std::string grid_to_string(const std::vector<GridRow>& rows) {
  std::ostringstream out;
  write_grid_csv(rows, out);
  return out.str();
}

}  // namespace

TEST_CASE("method roster and aliases") {
  const auto roster = default_method_roster(400);
  REQUIRE(roster.size() == 7);
  CHECK(roster[0].name == "GCM (LASSO)");
  CHECK(roster[1].name == "dCRT-hat (LASSO)");
  CHECK(roster[2].name == "GCM (PLASSO)");
  CHECK(roster[3].name == "dCRT-hat (PLASSO)");
  CHECK(roster[4].name == "Maxway CRT");
  CHECK(roster[5].name == "GCM (marginal)");
  CHECK(roster[6].name == "GCM (oracle)");
  CHECK(method_by_name("dcrt-plasso", 100).name == "dCRT-hat (PLASSO)");
  CHECK(method_by_name("GCM (oracle)", 100).mean_x == MeanKind::oracle);
  CHECK_THROWS_AS(method_by_name("nope", 100), InvalidInputError);
}

TEST_CASE("default grid cells follow the one-at-a-time design") {
  const auto cells = default_grid_cells();
  CHECK(cells.size() == 17);  // 4 axes x 5 values minus 3 duplicate defaults
  int n1600 = 0;
  for (const auto& c : cells)
    if (c.n == 1600 && c.p == 400 && c.s == 5 && c.rho == 0.4) ++n1600;
  CHECK(n1600 == 1);
}

TEST_CASE("ground truth serializes through the config object") {
  const GroundTruth t =
      GroundTruth::make(12, 3, 0.3, 0.4, 0.7, Family::binomial);
  const GroundTruth back = GroundTruth::from_json(t.to_json());
  CHECK(back.p() == 12);
  CHECK(back.s == 3);
  CHECK(back.rho == 0.3);
  CHECK(back.nu == 0.4);
  CHECK(back.theta == 0.7);
  CHECK(back.family == Family::binomial);
  CHECK(back.coef_x == t.coef_x);
  CHECK(back.coef_y == t.coef_y);
}

TEST_CASE("grid config accepts fixed scales and binary x") {
  const nlohmann::json config = {{"nu_max", 0.25}, {"theta_max", 0.5},
                                 {"binary_x", true}};
  const GridSpec spec = grid_spec_from_json(config);
  CHECK(spec.nu_max_override == 0.25);
  CHECK(spec.theta_max_override == 0.5);
  CHECK(spec.binary_x);
}

TEST_CASE("grid config round trip from json") {
  const nlohmann::json config = {
      {"mode", "power"},          {"family", "binomial"},
      {"setting", "semi_supervised"}, {"n", 120},
      {"p", 60},                  {"s", 4},
      {"rho", 0.2},               {"n_reps", 33},
      {"alpha", 0.1},             {"methods", {"gcm-lasso", "maxway"}},
      {"seed", 77}};
  const GridSpec spec = grid_spec_from_json(config);
  CHECK(spec.mode == GridSpec::Mode::power_grid);
  CHECK(spec.family == Family::binomial);
  CHECK(spec.setting == Setting::semi_supervised);
  CHECK(spec.cells.size() == 1);
  CHECK(spec.cells[0].n == 120);
  CHECK(spec.cells[0].p == 60);
  CHECK(spec.n_reps == 33);
  CHECK(spec.alpha == 0.1);
  CHECK(spec.methods.size() == 2);
  CHECK(spec.seed == 77);
  CHECK_THROWS_AS(grid_spec_from_json({{"mode", "bogus"}}),
                  InvalidInputError);
}

TEST_CASE("null grid is deterministic and worker-count independent") {
  const GridSpec spec = tiny_spec(GridSpec::Mode::null_grid);
  CalibrationCache cache1(""), cache2("");
  const auto rows1 = run_null_grid(spec, cache1, 1);
  const auto rows2 = run_null_grid(spec, cache2, 4);
  CHECK(rows1.size() == 5 * spec.methods.size());
  CHECK(grid_to_string(rows1) == grid_to_string(rows2));

  // identical reruns byte for byte
  CalibrationCache cache3("");
  const auto rows3 = run_null_grid(spec, cache3, 2);
  CHECK(grid_to_string(rows1) == grid_to_string(rows3));

  for (const auto& row : rows1) {
    CHECK(row.rejection_rate >= 0.0);
    CHECK(row.rejection_rate <= 1.0);
    const double expect_mcse =
        std::sqrt(row.rejection_rate * (1.0 - row.rejection_rate) /
                  (row.n_reps - row.failures));
    CHECK(row.mcse == doctest::Approx(expect_mcse));
  }
}

TEST_CASE("power grid runs and the theta=0 row sits near level") {
  GridSpec spec = tiny_spec(GridSpec::Mode::power_grid);
  spec.methods = {method_by_name("GCM (oracle)", 50)};
  spec.n_reps = 200;
  spec.n_cal = 400;
  CalibrationCache cache("");
  const auto rows = run_power_grid(spec, cache, default_workers());
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].theta == 0.0);
  // calibration sanity: power at the null point is near alpha
  CHECK(std::abs(rows[0].rejection_rate - 0.05) < 0.05);
  // power is nondecreasing up to Monte Carlo noise and near 0.99 at the top
  CHECK(rows[4].rejection_rate > 0.6);
}

TEST_CASE("calibration cache round trips through json") {
  const std::string path = "test_cache_tmp.json";
  std::remove(path.c_str());
  {
    CalibrationCache cache(path);
    cache.store_nu_max(Cell{200, 400, 5, 0.4}, Family::gaussian, 0.217);
    cache.store_theta_max(Cell{200, 400, 5, 0.4}, Family::gaussian, 0.1,
                          0.421);
    cache.save();
  }
  {
    CalibrationCache cache(path);
    const auto nu = cache.nu_max(Cell{200, 400, 5, 0.4}, Family::gaussian);
    REQUIRE(nu.has_value());
    CHECK(*nu == 0.217);
    const auto theta =
        cache.theta_max(Cell{200, 400, 5, 0.4}, Family::gaussian, 0.1);
    REQUIRE(theta.has_value());
    CHECK(*theta == 0.421);
    CHECK_FALSE(cache.nu_max(Cell{100, 400, 5, 0.4}, Family::gaussian)
                    .has_value());
  }
  std::remove(path.c_str());
}

TEST_CASE("csv schema") {
  GridRow row;
  row.setting = Setting::supervised;
  row.family = Family::gaussian;
  row.cell = Cell{200, 400, 5, 0.4};
  row.theta = 0.0;
  row.nu = 0.125;
  row.method = "GCM (LASSO)";
  row.n_reps = 400;
  row.rejection_rate = 0.0525;
  row.mcse = 0.0111;
  row.mean_p = 0.493;
  row.failures = 0;
  std::ostringstream out;
  write_grid_csv({row}, out);
  const std::string text = out.str();
  CHECK(text.find("setting,family,n,p,s,rho,theta,nu,method,n_reps,"
                  "rejection_rate,mcse,mean_p,failures") == 0);
  CHECK(text.find("supervised,gaussian,200,400,5,") != std::string::npos);
  CHECK(text.find("\"GCM (LASSO)\"") != std::string::npos);
}

TEST_CASE("semi-supervised grid runs") {
  GridSpec spec = tiny_spec(GridSpec::Mode::null_grid);
  spec.setting = Setting::semi_supervised;
  spec.methods = {method_by_name("GCM (oracle)", 50),
                  method_by_name("Maxway CRT", 50)};
  spec.n_reps = 16;
  CalibrationCache cache("");
  const auto rows = run_null_grid(spec, cache, 2);
  CHECK(rows.size() == 10);
  for (const auto& row : rows) CHECK(row.failures == 0);
}
