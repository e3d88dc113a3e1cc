#include "citest/core_model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "citest/errors.hpp"

namespace citest {

const char* family_name(Family f) {
  return f == Family::gaussian ? "gaussian" : "binomial";
}

Family family_from_name(const std::string& name) {
  if (name == "gaussian") return Family::gaussian;
  if (name == "binomial") return Family::binomial;
  throw InvalidInputError("unknown family: " + name);
}

void Dataset::validate() const {
  const auto nn = x.size();
  if (nn < 1) throw InvalidInputError("dataset needs n >= 1 rows");
  if (y.size() != nn || z.rows() != nn)
    throw InvalidInputError("x, y, z row counts differ");
  if (!x.allFinite() || !y.allFinite() || !z.allFinite())
    throw InvalidInputError("dataset contains non-finite values");
  if (family == Family::binomial) {
    for (Eigen::Index i = 0; i < nn; ++i) {
      if (y[i] != 0.0 && y[i] != 1.0)
        throw InvalidInputError("binomial response must be 0/1");
    }
  }
}

void SemiSupervisedData::validate() const {
  labeled.validate();
  if (unlabeled_x.size() != unlabeled_z.rows())
    throw InvalidInputError("unlabeled x and z row counts differ");
  if (unlabeled_z.cols() != labeled.z.cols())
    throw InvalidInputError("labeled and unlabeled covariate dimensions differ");
  if (unlabeled_x.size() < 1)
    throw InvalidInputError("unlabeled partition is empty");
}

GroundTruth GroundTruth::make(int p, int s, double rho, double nu, double theta,
                              Family family, bool binary_x) {
  if (p < 0 || s < 0 || s > p)
    throw InvalidInputError("need 0 <= s <= p");
  if (std::abs(rho) >= 1.0)
    throw InvalidInputError("need |rho| < 1");
  GroundTruth t;
  t.coef_x = Eigen::VectorXd::Zero(p);
  t.coef_x.head(s).setConstant(nu);
  t.coef_y = t.coef_x;
  t.theta = theta;
  t.rho = rho;
  t.s = s;
  t.nu = nu;
  t.family = family;
  t.binary_x = binary_x;
  return t;
}

nlohmann::json GroundTruth::to_json() const {
  return {{"p", p()},         {"s", s},           {"rho", rho},
          {"theta", theta},   {"nu", nu},         {"family", family_name(family)},
          {"binary_x", binary_x}};
}

GroundTruth GroundTruth::from_json(const nlohmann::json& config) {
  return make(config.at("p").get<int>(), config.at("s").get<int>(),
              config.at("rho").get<double>(), config.value("nu", 0.0),
              config.value("theta", 0.0),
              family_from_name(config.value("family", "gaussian")),
              config.value("binary_x", false));
}

Eigen::MatrixXd ar1_covariance(int p, double rho) {
  if (p < 1) throw InvalidInputError("ar1_covariance needs p >= 1");
  if (std::abs(rho) >= 1.0)
    throw InvalidInputError("ar1_covariance needs |rho| < 1");
  Eigen::MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i) {
    sigma(i, i) = 1.0;
    for (int j = 0; j < i; ++j) {
      const double v = std::pow(rho, i - j);
      sigma(i, j) = v;
      sigma(j, i) = v;
    }
  }
  return sigma;
}

Eigen::MatrixXd sample_ar1_gaussian(int n, int p, double rho, Rng& rng) {
  if (n < 1 || p < 1) throw InvalidInputError("need n, p >= 1");
  if (std::abs(rho) >= 1.0) throw InvalidInputError("need |rho| < 1");
  Eigen::MatrixXd z(n, p);
  fill_std_normal(rng, z.col(0).data(), static_cast<std::size_t>(n));
  if (p == 1) return z;
  const double innov = std::sqrt(1.0 - rho * rho);
  Eigen::VectorXd eps(n);
  for (int j = 1; j < p; ++j) {
    fill_std_normal(rng, eps.data(), static_cast<std::size_t>(n));
    z.col(j) = rho * z.col(j - 1) + innov * eps;
  }
  return z;
}

double ar1_quadratic_form(int s, double rho, double nu) {
  // sum over the leading s x s block of rho^|i-j|, scaled by nu^2
  double cross = 0.0;
  double rpow = rho;
  for (int d = 1; d < s; ++d) {
    cross += (s - d) * rpow;
    rpow *= rho;
  }
  return nu * nu * (s + 2.0 * cross);
}

namespace {

Eigen::VectorXd draw_x(const GroundTruth& truth, const Eigen::VectorXd& eta_x,
                       Rng& rng) {
  const int n = static_cast<int>(eta_x.size());
  Eigen::VectorXd x(n);
  if (truth.binary_x) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < n; ++i) x[i] = unif(rng) < logistic(eta_x[i]) ? 1.0 : 0.0;
  } else {
    fill_std_normal(rng, x.data(), static_cast<std::size_t>(n));
    x += eta_x;
  }
  return x;
}

Eigen::VectorXd draw_y(Family family, const Eigen::VectorXd& eta_y, Rng& rng) {
  const int n = static_cast<int>(eta_y.size());
  Eigen::VectorXd y(n);
  if (family == Family::binomial) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < n; ++i) y[i] = unif(rng) < logistic(eta_y[i]) ? 1.0 : 0.0;
  } else {
    fill_std_normal(rng, y.data(), static_cast<std::size_t>(n));
    y += eta_y;
  }
  return y;
}

}  // namespace

Dataset generate_dataset(const GroundTruth& truth, int n, Rng& rng) {
  if (n < 1) throw InvalidInputError("need n >= 1");
  Dataset ds;
  ds.family = truth.family;
  ds.z = sample_ar1_gaussian(n, std::max(truth.p(), 1), truth.rho, rng);
  if (truth.p() == 0) ds.z.resize(n, 0);
  const Eigen::VectorXd eta_x =
      truth.p() > 0 ? (ds.z * truth.coef_x).eval() : Eigen::VectorXd::Zero(n);
  ds.x = draw_x(truth, eta_x, rng);
  const Eigen::VectorXd zy =
      truth.p() > 0 ? (ds.z * truth.coef_y).eval() : Eigen::VectorXd::Zero(n);
  ds.y = draw_y(truth.family, truth.theta * ds.x + zy, rng);
  return ds;
}

Dataset generate_point_null_dataset(const GroundTruth& truth, int n, Rng& rng) {
  if (n < 1) throw InvalidInputError("need n >= 1");
  Dataset ds;
  ds.family = truth.family;
  ds.z = sample_ar1_gaussian(n, std::max(truth.p(), 1), truth.rho, rng);
  if (truth.p() == 0) ds.z.resize(n, 0);
  const Eigen::VectorXd eta_x =
      truth.p() > 0 ? (ds.z * truth.coef_x).eval() : Eigen::VectorXd::Zero(n);
  ds.x = draw_x(truth, eta_x, rng);
  Eigen::VectorXd mu_x(n);
  if (truth.binary_x) {
    mu_x = eta_x.unaryExpr([](double t) { return logistic(t); });
  } else {
    mu_x = eta_x;
  }
  const Eigen::VectorXd zy =
      truth.p() > 0 ? (ds.z * truth.coef_y).eval() : Eigen::VectorXd::Zero(n);
  ds.y = draw_y(truth.family, truth.theta * mu_x + zy, rng);
  return ds;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> true_conditional_means(
    const GroundTruth& truth, const Eigen::MatrixXd& z) {
  if (z.cols() != truth.p())
    throw InvalidInputError("z has wrong number of columns");
  const int n = static_cast<int>(z.rows());
  const Eigen::VectorXd eta_x =
      truth.p() > 0 ? (z * truth.coef_x).eval() : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd mu_x =
      truth.binary_x
          ? eta_x.unaryExpr([](double t) { return logistic(t); }).eval()
          : eta_x;
  Eigen::VectorXd mu_y;
  const Eigen::VectorXd zy =
      truth.p() > 0 ? (z * truth.coef_y).eval() : Eigen::VectorXd::Zero(n);
  if (truth.family == Family::binomial) {
    if (truth.theta != 0.0)
      throw InvalidInputError(
          "E[y|z] has no closed form for binomial y with theta != 0");
    mu_y = zy.unaryExpr([](double t) { return logistic(t); });
  } else {
    // law of total expectation: E[y|z] = theta*E[x|z] + z'coef_y
    mu_y = truth.theta * mu_x + zy;
  }
  return {std::move(mu_x), std::move(mu_y)};
}

namespace {

void append_double(std::string& line, double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  line.append(buf, res.ptr);
}

}  // namespace

void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  out << "x,y";
  for (int j = 1; j <= ds.p(); ++j) out << ",z" << j;
  out << "\n";
  std::string line;
  for (int i = 0; i < ds.n(); ++i) {
    line.clear();
    append_double(line, ds.x[i]);
    line.push_back(',');
    append_double(line, ds.y[i]);
    for (int j = 0; j < ds.p(); ++j) {
      line.push_back(',');
      append_double(line, ds.z(i, j));
    }
    line.push_back('\n');
    out << line;
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw InvalidInputError("empty CSV: missing header");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "x" || header[1] != "y")
    throw InvalidInputError("CSV header must start with x,y");
  const int p = static_cast<int>(header.size()) - 2;
  for (int j = 0; j < p; ++j) {
    if (header[2 + j] != "z" + std::to_string(j + 1))
      throw InvalidInputError("CSV header column " + std::to_string(3 + j) +
                              " must be z" + std::to_string(j + 1));
  }
  std::vector<double> vals;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != p + 2)
      throw InvalidInputError("bad CSV row " + std::to_string(row) +
                              ": expected " + std::to_string(p + 2) +
                              " fields, got " + std::to_string(fields.size()));
    for (const auto& f : fields) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(f, &pos);
      } catch (const std::exception&) {
        throw InvalidInputError("bad CSV row " + std::to_string(row) +
                                ": cannot parse '" + f + "'");
      }
      if (pos != f.size() || !std::isfinite(v))
        throw InvalidInputError("bad CSV row " + std::to_string(row) +
                                ": non-finite or trailing garbage in '" + f +
                                "'");
      vals.push_back(v);
    }
  }
  if (row == 0) throw InvalidInputError("CSV has no data rows");
  Dataset ds;
  const int n = row;
  ds.x.resize(n);
  ds.y.resize(n);
  ds.z.resize(n, p);
  for (int i = 0; i < n; ++i) {
    const double* rec = vals.data() + static_cast<std::size_t>(i) * (p + 2);
    ds.x[i] = rec[0];
    ds.y[i] = rec[1];
    for (int j = 0; j < p; ++j) ds.z(i, j) = rec[2 + j];
  }
  bool binary = true;
  for (int i = 0; i < n; ++i) {
    if (ds.y[i] != 0.0 && ds.y[i] != 1.0) {
      binary = false;
      break;
    }
  }
  ds.family = binary ? Family::binomial : Family::gaussian;
  ds.validate();
  return ds;
}

}  // namespace citest
