#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Eigenvalues>
#include <sstream>

#include "citest/core_model.hpp"
#include "citest/errors.hpp"
#include "doctest.h"

using namespace citest;

TEST_CASE("ar1 covariance entries and definiteness") {
  const Eigen::MatrixXd s3 = ar1_covariance(3, 0.5);
  CHECK(s3(0, 0) == 1.0);
  CHECK(s3(0, 1) == 0.5);
  CHECK(s3(0, 2) == 0.25);
  CHECK(s3(1, 2) == 0.5);
  CHECK(s3.isApprox(s3.transpose()));

  CHECK(ar1_covariance(2, 0.0).isApprox(Eigen::MatrixXd::Identity(2, 2)));

  // dense eigensolver oracle: all eigenvalues positive at rho = 0.8
  const Eigen::MatrixXd s4 = ar1_covariance(4, 0.8);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s4);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);

  CHECK_THROWS_AS(ar1_covariance(3, 1.0), InvalidInputError);
  CHECK_THROWS_AS(ar1_covariance(0, 0.5), InvalidInputError);
}

TEST_CASE("ar1 sampler matches the covariance") {
  const int n = 20000, p = 6;
  for (double rho : {0.0, 0.4, 0.8}) {
    Rng rng = make_rng(99, {static_cast<uint64_t>(rho * 10)});
    const Eigen::MatrixXd z = sample_ar1_gaussian(n, p, rho, rng);
    const Eigen::MatrixXd target = ar1_covariance(p, rho);
    Eigen::MatrixXd centered = z.rowwise() - z.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / n;
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < p; ++j) {
        // 4 standard errors; se of a covariance of unit-variance normals
        const double se = std::sqrt((1.0 + target(i, j) * target(i, j)) / n);
        CHECK(std::abs(cov(i, j) - target(i, j)) < 4.0 * se);
      }
    }
  }
}

TEST_CASE("samplers are deterministic given the seed") {
  Rng r1 = make_rng(7, {1});
  Rng r2 = make_rng(7, {1});
  const Eigen::MatrixXd a = sample_ar1_gaussian(50, 8, 0.6, r1);
  const Eigen::MatrixXd b = sample_ar1_gaussian(50, 8, 0.6, r2);
  CHECK(a == b);  // bit-identical

  const GroundTruth t = GroundTruth::make(30, 3, 0.2, 0.5, 0.7,
                                          Family::gaussian);
  Rng r3 = make_rng(8, {2});
  Rng r4 = make_rng(8, {2});
  const Dataset d1 = generate_dataset(t, 40, r3);
  const Dataset d2 = generate_dataset(t, 40, r4);
  CHECK(d1.x == d2.x);
  CHECK(d1.y == d2.y);
  CHECK(d1.z == d2.z);
}

TEST_CASE("generate_dataset moments") {
  SUBCASE("full independence at theta=0, nu=0") {
    const GroundTruth t = GroundTruth::make(5, 0, 0.0, 0.0, 0.0,
                                            Family::gaussian);
    Rng rng = make_rng(11, {0});
    const Dataset ds = generate_dataset(t, 10000, rng);
    const double corr =
        (ds.x.array() - ds.x.mean())
            .cwiseProduct(ds.y.array() - ds.y.mean())
            .sum() /
        std::sqrt((ds.x.array() - ds.x.mean()).square().sum() *
                  (ds.y.array() - ds.y.mean()).square().sum());
    CHECK(std::abs(corr) < 3.0 / std::sqrt(10000.0));
  }

  SUBCASE("cov(x, y) matches beta' Sigma beta under the null") {
    const GroundTruth t = GroundTruth::make(20, 4, 0.3, 0.4, 0.0,
                                            Family::gaussian);
    const double expected =
        t.coef_x.transpose() * ar1_covariance(20, 0.3) * t.coef_y;
    // closed-form shortcut must agree with the matrix arithmetic oracle
    CHECK(ar1_quadratic_form(4, 0.3, 0.4) == doctest::Approx(expected));
    Rng rng = make_rng(12, {0});
    const Dataset ds = generate_dataset(t, 40000, rng);
    const double cov = (ds.x.array() - ds.x.mean())
                           .cwiseProduct(ds.y.array() - ds.y.mean())
                           .sum() /
                       ds.n();
    CHECK(cov == doctest::Approx(expected).epsilon(0.15));
  }

  SUBCASE("regression slope of y on x equals theta") {
    const GroundTruth t = GroundTruth::make(5, 0, 0.0, 0.0, 0.5,
                                            Family::gaussian);
    Rng rng = make_rng(13, {0});
    const Dataset ds = generate_dataset(t, 10000, rng);
    // OLS oracle
    const double slope = (ds.x.array() - ds.x.mean())
                             .cwiseProduct(ds.y.array() - ds.y.mean())
                             .sum() /
                         (ds.x.array() - ds.x.mean()).square().sum();
    CHECK(slope == doctest::Approx(0.5).epsilon(0.05));
  }

  SUBCASE("binomial responses are 0/1") {
    const GroundTruth t = GroundTruth::make(10, 2, 0.4, 0.5, 0.0,
                                            Family::binomial);
    Rng rng = make_rng(14, {0});
    const Dataset ds = generate_dataset(t, 500, rng);
    ds.validate();
    for (int i = 0; i < ds.n(); ++i)
      CHECK((ds.y[i] == 0.0 || ds.y[i] == 1.0));
  }
}

TEST_CASE("point-null dataset") {
  SUBCASE("theta=0 formulas coincide with generate_dataset") {
    const GroundTruth t = GroundTruth::make(8, 2, 0.3, 0.4, 0.0,
                                            Family::gaussian);
    Rng r1 = make_rng(21, {0});
    Rng r2 = make_rng(21, {0});
    const Dataset a = generate_dataset(t, 60, r1);
    const Dataset b = generate_point_null_dataset(t, 60, r2);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
  }

  SUBCASE("zero mean marginal for nu=0, gaussian") {
    GroundTruth t = GroundTruth::make(4, 0, 0.0, 0.0, 1.0, Family::gaussian);
    Rng rng = make_rng(22, {0});
    const Dataset ds = generate_point_null_dataset(t, 20000, rng);
    CHECK(std::abs(ds.y.mean()) < 4.0 / std::sqrt(20000.0));
    CHECK((ds.y.array() - ds.y.mean()).square().sum() / ds.n() ==
          doctest::Approx(1.0).epsilon(0.05));
  }

  SUBCASE("partial correlation of x and y given z vanishes") {
    const GroundTruth t = GroundTruth::make(3, 3, 0.2, 0.5, 0.8,
                                            Family::gaussian);
    Rng rng = make_rng(23, {0});
    const Dataset ds = generate_point_null_dataset(t, 10000, rng);
    // residualize both on z by least squares and correlate
    const Eigen::MatrixXd z = ds.z;
    const auto qr = z.householderQr();
    const Eigen::VectorXd rx = ds.x - z * qr.solve(ds.x);
    const Eigen::VectorXd ry = ds.y - z * qr.solve(ds.y);
    const double corr =
        rx.dot(ry) / std::sqrt(rx.squaredNorm() * ry.squaredNorm());
    CHECK(std::abs(corr) < 4.0 / std::sqrt(10000.0));
  }
}

TEST_CASE("true conditional means") {
  SUBCASE("zero covariates give zero means") {
    const GroundTruth t = GroundTruth::make(3, 2, 0.0, 0.7, 0.0,
                                            Family::gaussian);
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(5, 3);
    const auto [mx, my] = true_conditional_means(t, z);
    CHECK(mx.isZero());
    CHECK(my.isZero());
  }

  SUBCASE("binomial null mean is logistic(0) = 0.5 for zero coefficients") {
    GroundTruth t = GroundTruth::make(3, 0, 0.0, 0.0, 0.0, Family::binomial);
    const Eigen::MatrixXd z = Eigen::MatrixXd::Random(4, 3);
    const auto [mx, my] = true_conditional_means(t, z);
    for (int i = 0; i < 4; ++i) CHECK(my[i] == doctest::Approx(0.5));
  }

  SUBCASE("gaussian theta shifts mu_y by theta*beta, checked by regression") {
    const GroundTruth t = GroundTruth::make(6, 3, 0.4, 0.5, 0.3,
                                            Family::gaussian);
    Rng rng = make_rng(31, {0});
    const Dataset ds = generate_dataset(t, 30000, rng);
    const auto [mx, my] = true_conditional_means(t, ds.z);
    CHECK(my.isApprox(ds.z * (t.coef_y + 0.3 * t.coef_x)));
    // Monte Carlo check of the law of total expectation
    const Eigen::VectorXd resid = ds.y - my;
    CHECK(std::abs(resid.mean()) < 0.03);
    // residual should be uncorrelated with every column of z
    for (int j = 0; j < 6; ++j)
      CHECK(std::abs(ds.z.col(j).dot(resid)) / ds.n() < 0.03);
  }

  SUBCASE("binomial with theta != 0 is unsupported") {
    GroundTruth t = GroundTruth::make(3, 1, 0.0, 0.5, 0.4, Family::binomial);
    const Eigen::MatrixXd z = Eigen::MatrixXd::Random(4, 3);
    CHECK_THROWS_AS(true_conditional_means(t, z), InvalidInputError);
  }
}

TEST_CASE("dataset csv round trip and validation") {
  const GroundTruth t = GroundTruth::make(3, 1, 0.2, 0.5, 0.0,
                                          Family::gaussian);
  Rng rng = make_rng(41, {0});
  const Dataset ds = generate_dataset(t, 25, rng);
  std::stringstream buf;
  write_dataset_csv(ds, buf);
  const Dataset back = read_dataset_csv(buf);
  CHECK(back.n() == ds.n());
  CHECK(back.p() == ds.p());
  CHECK(back.x.isApprox(ds.x));
  CHECK(back.z.isApprox(ds.z));

  SUBCASE("bad row is named") {
    std::stringstream bad("x,y,z1\n1.0,2.0,3.0\n1.0,oops,3.0\n");
    try {
      read_dataset_csv(bad);
      FAIL("expected a parse error");
    } catch (const InvalidInputError& e) {
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
  }

  SUBCASE("non-finite entries rejected") {
    std::stringstream bad("x,y,z1\n1.0,2.0,nan\n");
    CHECK_THROWS_AS(read_dataset_csv(bad), InvalidInputError);
  }

  SUBCASE("binomial tag requires 0/1 responses") {
    Dataset d;
    d.x = Eigen::VectorXd::Ones(3);
    d.y = Eigen::VectorXd::Constant(3, 0.5);
    d.z = Eigen::MatrixXd::Zero(3, 2);
    d.family = Family::binomial;
    CHECK_THROWS_AS(d.validate(), InvalidInputError);
  }
}
