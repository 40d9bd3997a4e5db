#include <cmath>
#include <vector>

#include "doctest.h"
#include "spex/errors.hpp"
#include "spex/gam.hpp"
#include "spex/optim.hpp"
#include "spex/rng.hpp"

using namespace spex;

namespace {

ColumnTable grid_table(const std::string& name, int n, double lo, double hi) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = lo + (hi - lo) * i / (n - 1.0);
  return {{name, x}};
}

}  // namespace

TEST_SUITE_BEGIN("gam");

TEST_CASE("single linear covariate design") {
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"x", LinearTerm{"x"}});
  ColumnTable data{{"x", {1.0, 2.0, 3.0}}};
  const auto d = build_design(spec, data);
  CHECK(d.X.rows() == 3);
  CHECK(d.X.cols() == 2);
  CHECK(d.X(0, 0) == 1.0);
  CHECK(d.X(2, 1) == 3.0);
  CHECK(d.penalties.empty());
}

TEST_CASE("bspline partition of unity, inside and beyond the knots") {
  const auto b = BasisSpec::uniform("x", 10, 0.0, 1.0);
  for (double x : {0.0, 0.013, 0.5, 0.997, 1.0, -0.3, 1.8}) {
    CHECK(b.eval(x).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto bc = BasisSpec::cyclic_uniform("d", 8, 0.0, 366.0);
  for (double x : {0.0, 50.0, 365.9, 366.0, 400.0, -10.0}) {
    CHECK(bc.eval(x).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bspline derivative row matches finite differences") {
  const auto b = BasisSpec::uniform("x", 8, -2.0, 5.0);
  const double h = 1e-6;
  for (double x : {-1.9, 0.4, 3.3, 4.9}) {
    Eigen::RowVectorXd deriv;
    b.eval(x, &deriv);
    const Eigen::RowVectorXd fd = (b.eval(x + h) - b.eval(x - h)) / (2 * h);
    for (int j = 0; j < b.dim; ++j) {
      CHECK(deriv[j] == doctest::Approx(fd[j]).epsilon(1e-5));
    }
  }
}

TEST_CASE("cyclic basis wraps smoothly at the period boundary") {
  const auto bc = BasisSpec::cyclic_uniform("d", 9, 0.0, 366.0);
  const Eigen::RowVectorXd at0 = bc.eval(0.0);
  const Eigen::RowVectorXd atP = bc.eval(366.0);
  for (int j = 0; j < bc.dim; ++j) {
    CHECK(at0[j] == doctest::Approx(atP[j]).epsilon(1e-12));
  }
  // First derivative also matches across the wrap.
  Eigen::RowVectorXd d_lo, d_hi;
  bc.eval(1e-7, &d_lo);
  bc.eval(366.0 - 1e-7, &d_hi);
  for (int j = 0; j < bc.dim; ++j) {
    CHECK(d_lo[j] == doctest::Approx(d_hi[j]).epsilon(1e-4));
  }
}

TEST_CASE("tensor of 6x6 marginal bases has 36 columns") {
  LinearPredictorSpec spec;
  spec.intercept = true;
  TensorSpec ts{BasisSpec::uniform("lon", 6, 0.0, 1.0),
                BasisSpec::uniform("lat", 6, 0.0, 1.0)};
  spec.terms.push_back({"space", ts});
  ColumnTable data{{"lon", {0.2, 0.8}}, {"lat", {0.4, 0.6}}};
  const auto d = build_design(spec, data);
  CHECK(d.X.cols() == 37);  // intercept + 36
  CHECK(d.penalties.size() == 2);
  CHECK(d.penalties[0].size == 36);
  // Tensor rows inherit the product partition of unity.
  CHECK(d.X.row(0).segment(1, 36).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("design rejects non-finite input and missing columns") {
  LinearPredictorSpec spec;
  spec.terms.push_back({"f", BasisSpec::uniform("x", 5, 0.0, 1.0)});
  ColumnTable bad{{"x", {0.1, std::nan("")}}};
  CHECK_THROWS_AS(build_design(spec, bad), DataError);
  ColumnTable missing{{"y", {0.1, 0.5}}};
  CHECK_THROWS_AS(build_design(spec, missing), DataError);
}

TEST_CASE("duplicate term names rejected") {
  LinearPredictorSpec spec;
  spec.terms.push_back({"x", LinearTerm{"x"}});
  spec.terms.push_back({"x", LinearTerm{"x"}});
  ColumnTable data{{"x", {1.0}}};
  CHECK_THROWS_AS(build_design(spec, data), ConfigError);
}

TEST_CASE("gaussian fit recovers y = 2x exactly") {
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"x", LinearTerm{"x"}});
  const auto data = grid_table("x", 20, -1.0, 3.0);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) y[i] = 2.0 * data.at("x")[i];
  const auto d = build_design(spec, data);
  const auto fit = fit_penalized(d, y, Family::GaussianIdentity);
  CHECK(fit.coef[1] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(fit.coef[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
  CHECK(fit.report.converged);
}

TEST_CASE("all-zero binomial responses trip the divergence guard") {
  LinearPredictorSpec spec;
  spec.intercept = true;
  ColumnTable data{{"x", std::vector<double>(40, 0.0)}};
  const auto d = build_design(spec, data);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(40);
  const auto fit = fit_penalized(d, y, Family::BinomialLogit);
  CHECK(fit.report.divergence_guard);
  CHECK(std::isfinite(fit.coef[0]));
  CHECK(fit.coef[0] < -20.0);
}

TEST_CASE("gamma-log recovers (1, 0.5) on simulated data") {
  const int n = 10000;
  RngStream g(CounterRng(2024).substream(5));
  std::vector<double> x(n);
  Eigen::VectorXd y(n);
  const double shape = 2.0;
  for (int i = 0; i < n; ++i) {
    x[i] = -2.0 + 4.0 * i / (n - 1.0);
    const double mu = std::exp(1.0 + 0.5 * x[i]);
    y[i] = g.gamma(shape) * mu / shape;
  }
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"x", LinearTerm{"x"}});
  const auto d = build_design(spec, {{"x", x}});
  const auto fit = fit_penalized(d, y, Family::GammaLog);
  CHECK(fit.coef[0] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(fit.coef[1] == doctest::Approx(0.5).epsilon(0.1));
  // Pearson dispersion should sit near 1/shape.
  CHECK(fit.dispersion == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("spline fit reproduces a smooth signal") {
  const int n = 400;
  RngStream g(CounterRng(7).substream(1));
  std::vector<double> x(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = i / (n - 1.0);
    y[i] = std::sin(2.0 * M_PI * x[i]) + 0.05 * g.normal();
  }
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"f", BasisSpec::uniform("x", 10, 0.0, 1.0)});
  const auto d = build_design(spec, {{"x", x}});
  const auto fit = fit_penalized(d, y, Family::GaussianIdentity);
  const auto eta = predict_eta(spec, fit, {{"x", x}});
  double rmse = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = std::sin(2.0 * M_PI * x[i]);
    rmse += (eta[i] - t) * (eta[i] - t);
  }
  rmse = std::sqrt(rmse / n);
  CHECK(rmse < 0.05);
}

TEST_CASE("penalty to infinity flattens spline curvature to its null space") {
  const int n = 200;
  RngStream g(CounterRng(99).substream(2));
  std::vector<double> x(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = i / (n - 1.0);
    y[i] = std::cos(3.0 * x[i]) + 0.1 * g.normal();
  }
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"f", BasisSpec::uniform("x", 10, 0.0, 1.0)});
  const auto d = build_design(spec, {{"x", x}});
  Smoothing s;
  s.fixed = {1e12};
  const auto fit = fit_penalized(d, y, Family::GaussianIdentity, s);
  // Second difference of the fitted curve over a fine grid ~ 0 (linear).
  const auto fine = grid_table("x", 50, 0.0, 1.0);
  const auto eta = predict_eta(spec, fit, fine);
  for (int i = 1; i + 1 < 50; ++i) {
    CHECK(std::fabs(eta[i - 1] - 2.0 * eta[i] + eta[i + 1]) < 1e-6);
  }
}

TEST_CASE("irls score matches finite-difference gradient of the objective") {
  // Penalized deviance gradient at the optimum vanishes in the constrained
  // space; verify via the raw objective as a function of coefficients.
  const int n = 60;
  RngStream g(CounterRng(3).substream(8));
  std::vector<double> x(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = i / (n - 1.0);
    y[i] = std::exp(0.4 + 0.8 * x[i]) * g.gamma(3.0) / 3.0;
  }
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"f", BasisSpec::uniform("x", 6, 0.0, 1.0)});
  const auto d = build_design(spec, {{"x", x}});
  Smoothing s;
  s.fixed = {2.5};
  const auto fit = fit_penalized(d, y, Family::GammaLog, s);

  // Build the penalized deviance as an explicit function of raw coefficients.
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d.X.cols(), d.X.cols());
  for (const auto& pb : d.penalties) {
    S.block(pb.offset, pb.offset, pb.size, pb.size) += 2.5 * pb.S;
  }
  const auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = d.X * beta;
    double dev = 0.0;
    for (int i = 0; i < n; ++i) {
      const double mu = std::exp(eta[i]);
      dev += 2.0 * ((y[i] - mu) / mu - std::log(y[i] / mu));
    }
    return dev + beta.dot(S * beta);
  };

  // Analytic gradient of the same objective (family score + penalty).
  const Eigen::VectorXd eta = d.X * fit.coef;
  Eigen::VectorXd score(n);
  for (int i = 0; i < n; ++i) {
    const double mu = std::exp(eta[i]);
    score[i] = 2.0 * (1.0 - y[i] / mu);  // d dev_i / d eta_i
  }
  const Eigen::VectorXd analytic = d.X.transpose() * score + 2.0 * S * fit.coef;
  const Eigen::VectorXd fd = fd_gradient(objective, fit.coef, 1e-6);
  for (int j = 0; j < analytic.size(); ++j) {
    const double denom = std::max(1.0, std::fabs(analytic[j]));
    CHECK(std::fabs(analytic[j] - fd[j]) / denom < 1e-5);
  }
}

TEST_CASE("optimum beats 50 random perturbations") {
  const int n = 150;
  RngStream g(CounterRng(41).substream(4));
  std::vector<double> x(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = i / (n - 1.0);
    const double p = 1.0 / (1.0 + std::exp(-(x[i] * 2.0 - 1.0)));
    y[i] = (g.uniform() < p) ? 1.0 : 0.0;
  }
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"f", BasisSpec::uniform("x", 6, 0.0, 1.0)});
  const auto d = build_design(spec, {{"x", x}});
  Smoothing s;
  s.fixed = {1.0};
  const auto fit = fit_penalized(d, y, Family::BinomialLogit, s);

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d.X.cols(), d.X.cols());
  for (const auto& pb : d.penalties) {
    S.block(pb.offset, pb.offset, pb.size, pb.size) += pb.S;
  }
  const auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = d.X * beta;
    double dev = 0.0;
    for (int i = 0; i < n; ++i) {
      const double mu = 1.0 / (1.0 + std::exp(-eta[i]));
      const double m = std::min(std::max(mu, 1e-12), 1.0 - 1e-12);
      dev += -2.0 * (y[i] * std::log(m) + (1.0 - y[i]) * std::log(1.0 - m));
    }
    return dev + beta.dot(S * beta);
  };

  // Perturb within the constrained (sum-to-zero) subspace so comparisons
  // stay inside the feasible parameterization.
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd csum = d.X.middleCols(1, 6).transpose() * ones;
  const double f0 = objective(fit.coef);
  RngStream pg(CounterRng(41).substream(9));
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd delta(d.X.cols());
    for (int j = 0; j < delta.size(); ++j) delta[j] = 0.05 * pg.normal();
    // Project the spline block onto the constraint.
    Eigen::VectorXd block = delta.segment(1, 6);
    block -= csum * (csum.dot(block) / csum.squaredNorm());
    delta.segment(1, 6) = block;
    CHECK(objective(fit.coef + delta) >= f0 - 1e-9);
  }
}

TEST_CASE("singular design signals instead of regularizing") {
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"x1", LinearTerm{"x1"}});
  spec.terms.push_back({"x2", LinearTerm{"x2"}});
  std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  ColumnTable data{{"x1", x}, {"x2", x}};  // perfectly collinear
  const auto d = build_design(spec, data);
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  CHECK_THROWS_AS(fit_penalized(d, y, Family::GaussianIdentity), NumericError);
}

TEST_CASE("gp tail fit: intercept-only simulated data") {
  const int n = 10000;
  RngStream g(CounterRng(123).substream(6));
  const double xi_true = 0.12;
  const double u_val = 8.0;
  const double sigma = u_val * std::exp(0.3);
  Eigen::VectorXd e(n), u(n);
  for (int i = 0; i < n; ++i) {
    const double p = g.uniform();
    e[i] = sigma * std::expm1(-xi_true * std::log1p(-p)) / xi_true;
    u[i] = u_val;
  }
  LinearPredictorSpec spec;
  spec.intercept = true;
  ColumnTable data{{"dummy", std::vector<double>(n, 0.0)}};
  const auto d = build_design(spec, data);
  const auto fit = fit_gp_tail(d, e, u);
  CHECK(fit.xi == doctest::Approx(0.12).scale(1.0).epsilon(0.03));
  CHECK(fit.coef[0] == doctest::Approx(0.3).scale(1.0).epsilon(0.05));
  CHECK(fit.xi > -0.5);
  CHECK(fit.xi < 1.0);
}

TEST_CASE("gp density limit at xi -> 0 matches exponential") {
  const double sigma = 2.3, y = 1.7;
  const double lim = gp_logpdf(y, sigma, 1e-9);
  const double expo = -std::log(sigma) - y / sigma;
  CHECK(lim == doctest::Approx(expo).epsilon(1e-8));
}

TEST_CASE("gp tail rejects degenerate all-equal exceedances") {
  LinearPredictorSpec spec;
  spec.intercept = true;
  ColumnTable data{{"dummy", std::vector<double>(5, 0.0)}};
  const auto d = build_design(spec, data);
  const Eigen::VectorXd e = Eigen::VectorXd::Constant(5, 1.5);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(5, 8.0);
  CHECK_THROWS_AS(fit_gp_tail(d, e, u), DataError);
}

TEST_CASE("predict_eta reproduces training eta and is linear in covariates") {
  const int n = 50;
  std::vector<double> x(n), temp(n);
  Eigen::VectorXd y(n);
  RngStream g(CounterRng(5).substream(7));
  for (int i = 0; i < n; ++i) {
    x[i] = i / (n - 1.0);
    temp[i] = g.normal();
    y[i] = 1.0 + x[i] + 0.7 * temp[i] + 0.01 * g.normal();
  }
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"f", BasisSpec::uniform("x", 6, 0.0, 1.0)});
  spec.terms.push_back({"temp", LinearTerm{"temp"}});
  const auto d = build_design(spec, {{"x", x}, {"temp", temp}});
  const auto fit = fit_penalized(d, y, Family::GaussianIdentity);

  const auto eta = predict_eta(spec, fit, {{"x", x}, {"temp", temp}});
  const Eigen::VectorXd direct = d.X * fit.coef;
  for (int i = 0; i < n; ++i) {
    CHECK(eta[i] == doctest::Approx(direct[i]).epsilon(1e-12));
  }

  // temp = 0 contributes nothing; temp shifted by c moves eta by beta*c.
  std::vector<double> zero(n, 0.0);
  const auto eta0 = predict_eta(spec, fit, {{"x", x}, {"temp", zero}});
  const double beta = fit.coef[fit.coef.size() - 1];
  for (int i = 0; i < n; ++i) {
    CHECK(eta[i] - eta0[i] == doctest::Approx(beta * temp[i]).epsilon(1e-10));
  }
  std::vector<double> shifted(temp);
  for (auto& v : shifted) v += 2.5;
  const auto eta_s = predict_eta(spec, fit, {{"x", x}, {"temp", shifted}});
  for (int i = 0; i < n; ++i) {
    CHECK(eta_s[i] - eta[i] == doctest::Approx(beta * 2.5).epsilon(1e-10));
  }
}

TEST_CASE("fit serialization round-trips") {
  LinearPredictorSpec spec;
  spec.intercept = true;
  spec.terms.push_back({"f", BasisSpec::uniform("x", 6, 0.0, 1.0)});
  spec.terms.push_back({"day", BasisSpec::cyclic_uniform("day", 8, 0.0, 366.0)});
  spec.terms.push_back({"temp", LinearTerm{"temp"}});

  const int n = 80;
  std::vector<double> x(n), day(n), temp(n);
  Eigen::VectorXd y(n);
  RngStream g(CounterRng(17).substream(2));
  for (int i = 0; i < n; ++i) {
    x[i] = i / (n - 1.0);
    day[i] = 1.0 + 365.0 * i / n;
    temp[i] = g.normal();
    y[i] = std::exp(0.5 + 0.2 * temp[i]) * g.gamma(2.0) / 2.0;
  }
  ColumnTable data{{"x", x}, {"day", day}, {"temp", temp}};
  const auto d = build_design(spec, data);
  const auto fit = fit_penalized(d, y, Family::GammaLog);

  const auto jspec = spec_to_json(spec);
  const auto jfit = fit_to_json(fit);
  const auto spec2 = spec_from_json(nlohmann::json::parse(jspec.dump()));
  const auto fit2 = fit_from_json(nlohmann::json::parse(jfit.dump()));

  const auto eta1 = predict_eta(spec, fit, data);
  const auto eta2 = predict_eta(spec2, fit2, data);
  for (int i = 0; i < n; ++i) {
    CHECK(eta1[i] == doctest::Approx(eta2[i]).epsilon(1e-14));
  }
  CHECK(fit2.family == Family::GammaLog);
  CHECK(fit2.smoothing.size() == fit.smoothing.size());
}

TEST_SUITE_END();
