#include "spex/rpareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "spex/csv.hpp"
#include "spex/errors.hpp"
#include "spex/optim.hpp"
#include "spex/rng.hpp"
#include "spex/stats.hpp"

namespace spex {

void Semivariogram::validate() const {
  if (!(nu > 0.0) || !(nu <= 2.0)) {
    std::ostringstream os;
    os << "semivariogram smoothness must lie in (0, 2], got " << nu;
    throw ConfigError(os.str());
  }
  if (!std::isfinite(lambda0) || !std::isfinite(lambda1)) {
    throw ConfigError("semivariogram range coefficients must be finite");
  }
}

double Semivariogram::operator()(double h, double temp) const {
  if (h <= 0.0) return 0.0;
  return std::exp(nu * (std::log(h) - log_range(temp)));
}

double chi(const Semivariogram& sv, double h, double temp) {
  return 2.0 - 2.0 * norm_cdf(std::sqrt(0.5 * sv(h, temp)));
}

double RiskFunctional::operator()(std::span<const double> y) const {
  double s = 0.0;
  for (double v : y) s += std::pow(v, theta);
  return std::pow(s / static_cast<double>(y.size()), 1.0 / theta);
}

double RiskFunctional::partial(std::span<const double> y, std::size_t j,
                               double r) const {
  return std::pow(r, 1.0 - theta) * std::pow(y[j], theta - 1.0) /
         static_cast<double>(y.size());
}

EventSet extract_events(const ParetoField& field, double theta,
                        double quantile, int min_obs) {
  const Eigen::Index ndays = field.values.rows();
  const Eigen::Index nsites = field.values.cols();
  if (static_cast<Eigen::Index>(field.dates.size()) != ndays ||
      static_cast<Eigen::Index>(field.temp.size()) != ndays) {
    throw ConfigError("field dates/temp length must match the value rows");
  }
  if (static_cast<Eigen::Index>(field.site_xy.size()) != nsites) {
    throw ConfigError("field site coordinates must match the value columns");
  }
  if (!(theta > 0.0)) throw ConfigError("risk exponent theta must be positive");
  if (!(quantile > 0.0) || !(quantile < 1.0)) {
    throw ConfigError("event quantile must lie in (0, 1)");
  }
  if (min_obs < 1) throw ConfigError("min_obs must be at least 1");

  const RiskFunctional rf{theta};
  struct Candidate {
    Eigen::Index row;
    double r;
  };
  std::vector<Candidate> qualifying;
  std::vector<double> yobs;
  for (Eigen::Index t = 0; t < ndays; ++t) {
    yobs.clear();
    for (Eigen::Index k = 0; k < nsites; ++k) {
      const double v = field.values(t, k);
      if (std::isnan(v)) continue;
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw DataError("unit-scale values must be positive and finite");
      }
      yobs.push_back(v);
    }
    if (static_cast<int>(yobs.size()) < min_obs) continue;
    qualifying.push_back({t, rf(yobs)});
  }
  if (qualifying.size() < 20) {
    std::ostringstream os;
    os << "need at least 20 qualifying days, got " << qualifying.size();
    throw DataError(os.str());
  }

  std::vector<double> rvals(qualifying.size());
  for (std::size_t i = 0; i < qualifying.size(); ++i) rvals[i] = qualifying[i].r;
  std::sort(rvals.begin(), rvals.end());
  const auto pos = static_cast<std::size_t>(
      std::floor(quantile * static_cast<double>(rvals.size())));
  const double u = rvals[std::min(pos, rvals.size() - 1)];

  EventSet es;
  es.site_xy = field.site_xy;
  es.threshold = u;
  es.theta = theta;
  for (const Candidate& c : qualifying) {
    if (c.r < u) continue;
    Event ev;
    ev.day = field.dates[c.row];
    ev.temp = field.temp[c.row];
    ev.r_value = c.r;
    for (Eigen::Index k = 0; k < nsites; ++k) {
      const double v = field.values(c.row, k);
      if (std::isnan(v)) continue;
      ev.sites.push_back(static_cast<std::uint32_t>(k));
      ev.y.push_back(v);
    }
    es.events.push_back(std::move(ev));
  }
  return es;
}

namespace {

// log exponent-measure density with optional first/second derivatives in y.
// gamma is the m-by-m semivariogram matrix in observed order (zero diagonal);
// index 0 is the reference component.
double intensity_core(const Eigen::VectorXd& y, const Eigen::MatrixXd& gamma,
                      Eigen::VectorXd* grad, Eigen::VectorXd* hess_diag) {
  const Eigen::Index m = y.size();
  if (m == 1) {
    if (grad) {
      grad->resize(1);
      (*grad)(0) = -2.0 / y(0);
    }
    if (hess_diag) {
      hess_diag->resize(1);
      (*hess_diag)(0) = 2.0 / (y(0) * y(0));
    }
    return -2.0 * std::log(y(0));
  }

  const Eigen::Index k = m - 1;
  Eigen::MatrixXd Psi(k, k);
  Eigen::VectorXd omega(k);
  for (Eigen::Index i = 1; i < m; ++i) {
    omega(i - 1) = std::log(y(i) / y(0)) + gamma(0, i);
    for (Eigen::Index j = 1; j <= i; ++j) {
      const double v = gamma(0, i) + gamma(0, j) - gamma(i, j);
      Psi(i - 1, j - 1) = v;
      Psi(j - 1, i - 1) = v;
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt(Psi);
  if (llt.info() != Eigen::Success) {
    throw NumericError("intensity covariance is not positive definite");
  }
  const Eigen::VectorXd q = llt.solve(omega);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) log_det += std::log(llt.matrixL()(i, i));
  log_det *= 2.0;

  double ld = -2.0 * std::log(y(0));
  for (Eigen::Index i = 1; i < m; ++i) ld -= std::log(y(i));
  ld -= 0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi);
  ld -= 0.5 * log_det;
  ld -= 0.5 * omega.dot(q);

  const double sq = q.sum();
  if (grad) {
    grad->resize(m);
    (*grad)(0) = (sq - 2.0) / y(0);
    for (Eigen::Index j = 1; j < m; ++j) (*grad)(j) = -(1.0 + q(j - 1)) / y(j);
  }
  if (hess_diag) {
    hess_diag->resize(m);
    const Eigen::VectorXd b = llt.solve(Eigen::VectorXd::Ones(k));
    const double tr = b.sum();
    (*hess_diag)(0) = (2.0 - sq - tr) / (y(0) * y(0));
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(k, k));
    for (Eigen::Index j = 1; j < m; ++j) {
      (*hess_diag)(j) = (1.0 + q(j - 1) - inv(j - 1, j - 1)) / (y(j) * y(j));
    }
  }
  return ld;
}

Eigen::VectorXd event_values(const Event& ev) {
  const std::size_t m = ev.y.size();
  if (m == 0) throw ConfigError("event has no observed components");
  if (ev.sites.size() != m) {
    throw ConfigError("event sites and values must have equal length");
  }
  Eigen::VectorXd y(m);
  for (std::size_t j = 0; j < m; ++j) {
    if (!(ev.y[j] > 0.0) || !std::isfinite(ev.y[j])) {
      throw DataError("event values must be positive and finite");
    }
    y(static_cast<Eigen::Index>(j)) = ev.y[j];
  }
  return y;
}

Eigen::MatrixXd gamma_matrix(const Event& ev, const std::vector<XY>& site_xy,
                             const Semivariogram& sv, double temp) {
  const auto m = static_cast<Eigen::Index>(ev.sites.size());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (ev.sites[i] >= site_xy.size()) {
      throw ConfigError("event site index outside the site table");
    }
    const XY& a = site_xy[ev.sites[i]];
    for (Eigen::Index j = 0; j < i; ++j) {
      const XY& b = site_xy[ev.sites[j]];
      const double v = sv(distance_km(a, b), temp);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

// Score weight w_j = y_j * g(r) and its own-coordinate derivative, where
// g(r) = 1 - exp(-(r/u - 1)) vanishes at the selection threshold.
void score_weights(const Eigen::VectorXd& y, double r, double u, double theta,
                   Eigen::VectorXd& w, Eigen::VectorXd& dw) {
  if (!(u > 0.0)) throw ConfigError("score threshold must be positive");
  if (r < u * (1.0 - 1e-12)) {
    throw NumericError("event risk falls below the score threshold");
  }
  const double g = 1.0 - std::exp(-(r / u - 1.0));
  const double gp = std::exp(-(r / u - 1.0)) / u;
  const auto m = y.size();
  const double minv = 1.0 / static_cast<double>(m);
  w.resize(m);
  dw.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    // d r / d y_j for the theta power mean.
    const double dr =
        std::pow(r, 1.0 - theta) * std::pow(y(j), theta - 1.0) * minv;
    w(j) = y(j) * g;
    dw(j) = g + y(j) * gp * dr;
  }
}

double weighted_score(const Eigen::VectorXd& w, const Eigen::VectorXd& dw,
                      const Eigen::VectorXd& grad,
                      const Eigen::VectorXd& hess_diag) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    s += 2.0 * w(j) * dw(j) * grad(j) + w(j) * w(j) * hess_diag(j) +
         0.5 * w(j) * w(j) * grad(j) * grad(j);
  }
  return s;
}

double prepared_score(const PreparedEvent& pe, const Semivariogram& sv) {
  const Eigen::Index m = pe.y.size();
  Eigen::MatrixXd gamma;
  if (m > 1) {
    const double lr = sv.log_range(pe.temp);
    gamma = (sv.nu * (pe.log_dist.array() - lr)).exp().matrix();
    gamma.diagonal().setZero();
  } else {
    gamma = Eigen::MatrixXd::Zero(1, 1);
  }
  Eigen::VectorXd grad, hess;
  intensity_core(pe.y, gamma, &grad, &hess);
  return weighted_score(pe.w, pe.dw, grad, hess);
}

}  // namespace

double intensity_log_density(const Event& ev, const std::vector<XY>& site_xy,
                             const Semivariogram& sv, double temp) {
  sv.validate();
  const Eigen::VectorXd y = event_values(ev);
  return intensity_core(y, gamma_matrix(ev, site_xy, sv, temp), nullptr,
                        nullptr);
}

IntensityDerivs intensity_derivs(const Event& ev,
                                 const std::vector<XY>& site_xy,
                                 const Semivariogram& sv, double temp) {
  sv.validate();
  const Eigen::VectorXd y = event_values(ev);
  IntensityDerivs out;
  out.log_density = intensity_core(y, gamma_matrix(ev, site_xy, sv, temp),
                                   &out.grad, &out.hess_diag);
  return out;
}

double gradient_score(const Event& ev, const std::vector<XY>& site_xy,
                      const Semivariogram& sv, double u, double theta) {
  sv.validate();
  const Eigen::VectorXd y = event_values(ev);
  const RiskFunctional rf{theta};
  const double r = rf(ev.y);
  Eigen::VectorXd w, dw;
  score_weights(y, r, u, theta, w, dw);
  Eigen::VectorXd grad, hess;
  intensity_core(y, gamma_matrix(ev, site_xy, sv, ev.temp), &grad, &hess);
  return weighted_score(w, dw, grad, hess);
}

PreparedEventSet prepare_events(const EventSet& es) {
  if (es.events.empty()) throw ConfigError("event set is empty");
  const RiskFunctional rf{es.theta};
  PreparedEventSet pes;
  pes.events.reserve(es.events.size());
  for (const Event& ev : es.events) {
    PreparedEvent pe;
    pe.temp = ev.temp;
    pe.y = event_values(ev);
    const auto m = static_cast<Eigen::Index>(ev.sites.size());
    pe.log_dist = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (ev.sites[i] >= es.site_xy.size()) {
        throw ConfigError("event site index outside the site table");
      }
      for (Eigen::Index j = 0; j < i; ++j) {
        const double d =
            distance_km(es.site_xy[ev.sites[i]], es.site_xy[ev.sites[j]]);
        const double ld = std::log(d);
        pe.log_dist(i, j) = ld;
        pe.log_dist(j, i) = ld;
      }
    }
    const double r = rf(ev.y);
    score_weights(pe.y, r, es.threshold, es.theta, pe.w, pe.dw);
    pes.events.push_back(std::move(pe));
  }
  pes.weight.assign(pes.events.size(), 1.0);
  return pes;
}

double mean_score(const PreparedEventSet& pes, const Semivariogram& sv,
                  Exec exec) {
  sv.validate();
  const std::size_t n = pes.events.size();
  if (n == 0) throw ConfigError("mean_score needs at least one event");
  if (!pes.weight.empty() && pes.weight.size() != n) {
    throw ConfigError("event weights must match the event count");
  }
  const double* wt = pes.weight.empty() ? nullptr : pes.weight.data();

  std::vector<double> scores(n, 0.0);
  for_index(exec, n, [&](std::size_t i) {
    if (wt && wt[i] == 0.0) return;
    try {
      scores[i] = prepared_score(pes.events[i], sv);
    } catch (const NumericError&) {
      scores[i] = std::numeric_limits<double>::quiet_NaN();
    }
  });

  double total = 0.0;
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = wt ? wt[i] : 1.0;
    if (w == 0.0) continue;
    if (!std::isfinite(scores[i])) {
      throw NumericError("intensity covariance is not positive definite");
    }
    total += w * scores[i];
    wsum += w;
  }
  if (!(wsum > 0.0)) throw ConfigError("all event weights are zero");
  return total / wsum;
}

namespace {

double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }

double nu_from(double a, const FitOptions& o) {
  return o.nu_min + (o.nu_max - o.nu_min) * logistic(a);
}

double a_from(double nu, const FitOptions& o) {
  const double lo = o.nu_min + 1e-6;
  const double hi = o.nu_max - 1e-6;
  const double p = (std::clamp(nu, lo, hi) - o.nu_min) / (o.nu_max - o.nu_min);
  return std::log(p / (1.0 - p));
}

double log_median_distance(const std::vector<XY>& xy) {
  std::vector<double> d;
  d.reserve(xy.size() * (xy.size() - 1) / 2);
  for (std::size_t i = 0; i < xy.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) d.push_back(distance_km(xy[i], xy[j]));
  }
  if (d.empty()) return 0.0;
  const double med = quantile(d, 0.5);
  return med > 0.0 ? std::log(med) : 0.0;
}

Objective make_objective(const PreparedEventSet& pes, const FitOptions& opts) {
  return [&pes, opts](const Eigen::VectorXd& x, Eigen::VectorXd*) -> double {
    const Semivariogram sv{nu_from(x[0], opts), x[1], x[2]};
    try {
      const double v = mean_score(pes, sv, opts.exec);
      return std::isfinite(v) ? v
                              : std::numeric_limits<double>::infinity();
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
}

DependenceFit fit_prepared(const PreparedEventSet& pes,
                           const std::vector<XY>& site_xy,
                           const FitOptions& opts) {
  if (!(opts.nu_min > 0.0) || !(opts.nu_max <= 2.0) ||
      !(opts.nu_min < opts.nu_max)) {
    throw ConfigError("smoothness bounds must satisfy 0 < lo < hi <= 2");
  }
  const Objective obj = make_objective(pes, opts);
  const double lm = log_median_distance(site_xy);

  std::vector<std::array<double, 3>> starts = {
      {0.3, lm - 1.0, 0.0}, {0.3, lm + 1.0, 0.0}, {1.0, lm - 1.0, 0.0},
      {1.0, lm + 1.0, 0.0}, {0.65, lm, 0.0},
  };
  if (opts.init) starts.push_back(*opts.init);

  BfgsOptions bopts;
  bopts.max_iter = opts.max_iter;
  bopts.grad_tol = 1e-6;

  DependenceFit fit;
  fit.report.total_starts = static_cast<int>(starts.size());
  bool have_best = false;
  OptimResult best;
  for (const auto& s : starts) {
    Eigen::VectorXd x0(3);
    x0 << a_from(s[0], opts), s[1], s[2];
    const OptimResult r = minimize_bfgs(obj, x0, bopts);
    if (!std::isfinite(r.value) || !r.x.allFinite()) {
      ++fit.report.failed_starts;
      continue;
    }
    if (!have_best || r.value < best.value) {
      best = r;
      have_best = true;
    }
  }
  if (!have_best) {
    throw NumericError("every optimization start produced a non-finite score");
  }
  fit.estimate = Semivariogram{nu_from(best.x[0], opts), best.x[1], best.x[2]};
  fit.report.converged = best.converged;
  fit.report.iterations = best.iterations;
  fit.report.objective = best.value;
  return fit;
}

}  // namespace

DependenceFit fit_gradient_score(const EventSet& es, const FitOptions& opts) {
  const PreparedEventSet pes = prepare_events(es);
  return fit_prepared(pes, es.site_xy, opts);
}

DependenceFit bootstrap_fit(const EventSet& es, int replicates,
                            std::uint64_t seed, const FitOptions& opts) {
  if (replicates < 1) throw ConfigError("bootstrap needs at least 1 replicate");
  PreparedEventSet pes = prepare_events(es);
  DependenceFit fit = fit_prepared(pes, es.site_xy, opts);
  fit.requested_replicates = replicates;

  Eigen::VectorXd x_base(3);
  x_base << a_from(fit.estimate.nu, opts), fit.estimate.lambda0,
      fit.estimate.lambda1;

  const Objective obj = make_objective(pes, opts);
  BfgsOptions bopts;
  bopts.max_iter = std::min(opts.max_iter, 100);
  bopts.grad_tol = 1e-5;

  const std::size_t n = pes.events.size();
  const CounterRng root(seed);
  fit.replicates.reserve(static_cast<std::size_t>(replicates));
  for (int rep = 0; rep < replicates; ++rep) {
    const CounterRng sub = root.substream(static_cast<std::uint64_t>(rep));
    std::fill(pes.weight.begin(), pes.weight.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      auto idx = static_cast<std::size_t>(sub.uniform(k) *
                                          static_cast<double>(n));
      pes.weight[std::min(idx, n - 1)] += 1.0;
    }
    const OptimResult r = minimize_bfgs(obj, x_base, bopts);
    if (!std::isfinite(r.value) || !r.x.allFinite()) {
      ++fit.failed_replicates;
      continue;
    }
    fit.replicates.push_back(
        {nu_from(r.x[0], opts), r.x[1], r.x[2]});
  }
  std::fill(pes.weight.begin(), pes.weight.end(), 1.0);

  if (10 * fit.failed_replicates > replicates) {
    std::ostringstream os;
    os << "bootstrap failure rate above 10%: " << fit.failed_replicates
       << " of " << replicates;
    throw NumericError(os.str());
  }
  return fit;
}

std::array<double, 5> replicate_quantiles(const DependenceFit& fit,
                                          int param) {
  if (param < 0 || param > 2) throw ConfigError("parameter index out of range");
  if (fit.replicates.empty()) {
    throw ConfigError("fit carries no bootstrap replicates");
  }
  std::vector<double> draws(fit.replicates.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    draws[i] = fit.replicates[i][static_cast<std::size_t>(param)];
  }
  return {quantile(draws, 0.025), quantile(draws, 0.25), quantile(draws, 0.5),
          quantile(draws, 0.75), quantile(draws, 0.975)};
}

nlohmann::json dependence_fit_to_json(const DependenceFit& fit) {
  nlohmann::json j;
  j["estimate"] = {{"nu", fit.estimate.nu},
                   {"lambda0", fit.estimate.lambda0},
                   {"lambda1", fit.estimate.lambda1}};
  j["report"] = {{"converged", fit.report.converged},
                 {"iterations", fit.report.iterations},
                 {"objective", fit.report.objective},
                 {"failed_starts", fit.report.failed_starts},
                 {"total_starts", fit.report.total_starts}};
  j["requested_replicates"] = fit.requested_replicates;
  j["failed_replicates"] = fit.failed_replicates;
  auto reps = nlohmann::json::array();
  for (const auto& r : fit.replicates) {
    reps.push_back({r[0], r[1], r[2]});
  }
  j["replicates"] = std::move(reps);
  if (!fit.replicates.empty()) {
    const char* names[3] = {"nu", "lambda0", "lambda1"};
    nlohmann::json q;
    for (int p = 0; p < 3; ++p) {
      const auto qs = replicate_quantiles(fit, p);
      q[names[p]] = {qs[0], qs[1], qs[2], qs[3], qs[4]};
    }
    j["quantiles"] = std::move(q);
    j["quantile_levels"] = {0.025, 0.25, 0.5, 0.75, 0.975};
  }
  return j;
}

DependenceFit dependence_fit_from_json(const nlohmann::json& j) {
  DependenceFit fit;
  const auto& e = j.at("estimate");
  fit.estimate.nu = e.at("nu").get<double>();
  fit.estimate.lambda0 = e.at("lambda0").get<double>();
  fit.estimate.lambda1 = e.at("lambda1").get<double>();
  const auto& r = j.at("report");
  fit.report.converged = r.at("converged").get<bool>();
  fit.report.iterations = r.at("iterations").get<int>();
  fit.report.objective = r.at("objective").get<double>();
  fit.report.failed_starts = r.at("failed_starts").get<int>();
  fit.report.total_starts = r.at("total_starts").get<int>();
  fit.requested_replicates = j.at("requested_replicates").get<int>();
  fit.failed_replicates = j.at("failed_replicates").get<int>();
  for (const auto& row : j.at("replicates")) {
    fit.replicates.push_back({row.at(0).get<double>(), row.at(1).get<double>(),
                              row.at(2).get<double>()});
  }
  return fit;
}

void write_events_csv(const EventSet& es, const std::string& path) {
  std::string out = "event,day,temp,r_value,station,value\n";
  for (std::size_t e = 0; e < es.events.size(); ++e) {
    const Event& ev = es.events[e];
    for (std::size_t j = 0; j < ev.sites.size(); ++j) {
      out += std::to_string(e);
      out += ',';
      out += format_date(static_cast<Date>(ev.day));
      out += ',';
      out += format_double(ev.temp);
      out += ',';
      out += format_double(ev.r_value);
      out += ',';
      out += std::to_string(ev.sites[j]);
      out += ',';
      out += format_double(ev.y[j]);
      out += '\n';
    }
  }
  write_text_file(path, out);
}

void write_fit_summary_csv(const std::vector<FitSummaryRow>& rows,
                           const std::string& path) {
  std::string out = "basin,season,theta,parameter,estimate,q025,q975\n";
  const char* names[3] = {"nu", "lambda0", "lambda1"};
  for (const FitSummaryRow& row : rows) {
    const double est[3] = {row.fit.estimate.nu, row.fit.estimate.lambda0,
                           row.fit.estimate.lambda1};
    for (int p = 0; p < 3; ++p) {
      out += csv_escape(row.basin);
      out += ',';
      out += csv_escape(row.season);
      out += ',';
      out += format_double(row.theta);
      out += ',';
      out += names[p];
      out += ',';
      out += format_double(est[p]);
      if (row.fit.replicates.empty()) {
        out += ",,";
      } else {
        const auto qs = replicate_quantiles(row.fit, p);
        out += ',';
        out += format_double(qs[0]);
        out += ',';
        out += format_double(qs[4]);
      }
      out += '\n';
    }
  }
  write_text_file(path, out);
}

}  // namespace spex
