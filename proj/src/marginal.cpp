#include "spex/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "spex/csv.hpp"
#include "spex/errors.hpp"
#include "spex/geo.hpp"
#include "spex/stats.hpp"

namespace spex {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Shared predictor structure: spatial tensor surface, elevation smooth,
/// cyclic day-of-year smooth, linear temperature effect.
LinearPredictorSpec marginal_spec(const StationSet& stations) {
  double lon_lo = 1e300, lon_hi = -1e300;
  double lat_lo = 1e300, lat_hi = -1e300;
  double el_lo = 1e300, el_hi = -1e300;
  for (const Station& s : stations.stations) {
    lon_lo = std::min(lon_lo, s.lon);
    lon_hi = std::max(lon_hi, s.lon);
    lat_lo = std::min(lat_lo, s.lat);
    lat_hi = std::max(lat_hi, s.lat);
    el_lo = std::min(el_lo, s.elev);
    el_hi = std::max(el_hi, s.elev);
  }
  const auto pad = [](double& lo, double& hi, double eps) {
    if (hi - lo < eps) {
      lo -= eps;
      hi += eps;
    }
  };
  pad(lon_lo, lon_hi, 0.25);
  pad(lat_lo, lat_hi, 0.25);
  pad(el_lo, el_hi, 1.0);

  LinearPredictorSpec spec;
  spec.terms.push_back(
      {"space", TensorSpec{BasisSpec::uniform("lon", 6, lon_lo, lon_hi),
                           BasisSpec::uniform("lat", 6, lat_lo, lat_hi)}});
  spec.terms.push_back({"elev", BasisSpec::uniform("elev", 10, el_lo, el_hi)});
  spec.terms.push_back(
      {"day", BasisSpec::cyclic_uniform("day", 10, 1.0, 366.0)});
  spec.terms.push_back({"temp", LinearTerm{"temp"}});
  spec.validate();
  return spec;
}

ColumnTable marginal_columns(const ObservationTable& table,
                             const StationSet& stations,
                             const CovariateSeries& covariate,
                             const std::vector<std::size_t>& rows) {
  std::vector<double> lon, lat, elev, day, temp;
  lon.reserve(rows.size());
  lat.reserve(rows.size());
  elev.reserve(rows.size());
  day.reserve(rows.size());
  temp.reserve(rows.size());
  for (std::size_t i : rows) {
    const Station& st = stations[table.station[i]];
    lon.push_back(st.lon);
    lat.push_back(st.lat);
    elev.push_back(st.elev);
    day.push_back(static_cast<double>(calendar_day_index(table.date[i])));
    temp.push_back(covariate.at(table.date[i]));
  }
  return ColumnTable{{"lon", std::move(lon)},
                     {"lat", std::move(lat)},
                     {"elev", std::move(elev)},
                     {"day", std::move(day)},
                     {"temp", std::move(temp)}};
}

/// Profile MLE of the Gamma shape given fitted means: the score in kappa
/// reduces to log(kappa) - digamma(kappa) = -(1 + mean(log(y/mu) - y/mu)).
double profile_gamma_shape(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  double c = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = y[i] / mu[i];
    c += std::log(r) - r;
  }
  c /= static_cast<double>(y.size());
  const double s = -(1.0 + c);  // >= 0 by Jensen, 0 only when y == mu exactly
  if (!(s > 0.0)) {
    throw NumericError("gamma shape profile is degenerate: residuals vanish");
  }
  double k = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) /
             (12.0 * s);
  for (int it = 0; it < 100; ++it) {
    const double f = std::log(k) - digamma(k) - s;
    const double df = 1.0 / k - trigamma(k);
    double next = k - f / df;
    if (!(next > 0.0)) next = k / 2.0;
    const bool done = std::fabs(next - k) < 1e-12 * k;
    k = next;
    if (done) break;
  }
  if (!std::isfinite(k) || !(k > 0.0)) {
    throw NumericError("gamma shape profile did not converge");
  }
  return k;
}

MarginalPoint make_point(const MarginalModel& m, double eta_gamma,
                         double eta_logit, double eta_gp) {
  MarginalPoint pt;
  pt.mu = std::exp(eta_gamma);
  pt.u_total =
      m.floor_mm + gamma_quantile_mean(m.bulk_quantile, m.kappa, pt.mu);
  pt.p_u = 1.0 / (1.0 + std::exp(-eta_logit));
  pt.sigma = pt.u_total * std::exp(eta_gp);
  return pt;
}

}  // namespace

void MarginalModel::validate() const {
  if (!(floor_mm >= 0.0)) throw ConfigError("marginal floor must be >= 0");
  if (!(bulk_quantile > 0.0 && bulk_quantile < 1.0)) {
    throw ConfigError("bulk quantile must lie in (0, 1)");
  }
  if (!(kappa > 0.0) || !std::isfinite(kappa)) {
    throw ConfigError("gamma shape must be positive");
  }
  if (!(gp_fit.xi > -0.5 && gp_fit.xi < 1.0)) {
    throw ConfigError("tail shape must lie in (-0.5, 1)");
  }
  spec.validate();
}

MarginalModel fit_marginal(const ObservationTable& table,
                           const StationSet& stations,
                           const CovariateSeries& covariate,
                           const MarginalOptions& opts) {
  if (!(opts.floor_mm >= 0.0)) throw ConfigError("marginal floor must be >= 0");
  if (!(opts.bulk_quantile > 0.0 && opts.bulk_quantile < 1.0)) {
    throw ConfigError("bulk quantile must lie in (0, 1)");
  }
  if (opts.min_exceedances < 1) {
    throw ConfigError("min_exceedances must be >= 1");
  }

  std::vector<std::size_t> bulk;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!is_missing(table.prcp[i]) && table.prcp[i] > opts.floor_mm) {
      bulk.push_back(i);
    }
  }
  if (bulk.empty()) {
    throw DataError("no observations above the precipitation floor");
  }

  MarginalModel m;
  m.floor_mm = opts.floor_mm;
  m.bulk_quantile = opts.bulk_quantile;
  m.cov_mean = covariate.mean;
  m.cov_sd = covariate.sd;
  m.spec = marginal_spec(stations);

  const ColumnTable cols = marginal_columns(table, stations, covariate, bulk);
  const Design design = build_design(m.spec, cols);

  Eigen::VectorXd z(static_cast<Eigen::Index>(bulk.size()));
  for (std::size_t r = 0; r < bulk.size(); ++r) {
    z[static_cast<Eigen::Index>(r)] = table.prcp[bulk[r]] - opts.floor_mm;
  }

  m.gamma_fit = fit_penalized(design, z, Family::GammaLog, opts.smoothing);
  const Eigen::VectorXd mu = (design.X * m.gamma_fit.coef).array().exp();
  m.kappa = profile_gamma_shape(z, mu);

  Eigen::VectorXd u_excess(z.size());  // threshold minus floor, per row
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    u_excess[i] = gamma_quantile_mean(opts.bulk_quantile, m.kappa, mu[i]);
  }

  Eigen::VectorXd above(z.size());
  std::vector<std::size_t> exceed;
  std::vector<double> exc_z, exc_u;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    above[i] = z[i] > u_excess[i] ? 1.0 : 0.0;
    if (above[i] > 0.5) {
      exceed.push_back(bulk[static_cast<std::size_t>(i)]);
      exc_z.push_back(z[i] - u_excess[i]);
      exc_u.push_back(opts.floor_mm + u_excess[i]);
    }
  }
  if (exceed.size() < static_cast<std::size_t>(opts.min_exceedances)) {
    throw DataError("only " + std::to_string(exceed.size()) +
                    " threshold exceedances; need at least " +
                    std::to_string(opts.min_exceedances));
  }

  m.logit_fit = fit_penalized(design, above, Family::BinomialLogit,
                              opts.smoothing);
  const ColumnTable exc_cols =
      marginal_columns(table, stations, covariate, exceed);
  const Design exc_design = build_design(m.spec, exc_cols);
  m.gp_fit = fit_gp_tail(
      exc_design,
      Eigen::Map<const Eigen::VectorXd>(exc_z.data(),
                                        static_cast<Eigen::Index>(exc_z.size())),
      Eigen::Map<const Eigen::VectorXd>(exc_u.data(),
                                        static_cast<Eigen::Index>(exc_u.size())),
      opts.smoothing);
  return m;
}

MarginalPoint marginal_point(const MarginalModel& m, const Station& st, Date d,
                             double temp) {
  const ColumnTable one{
      {"lon", {st.lon}},
      {"lat", {st.lat}},
      {"elev", {st.elev}},
      {"day", {static_cast<double>(calendar_day_index(d))}},
      {"temp", {temp}}};
  const double eg = predict_eta(m.spec, m.gamma_fit, one)[0];
  const double el = predict_eta(m.spec, m.logit_fit, one)[0];
  const double ep = predict_eta(m.spec, m.gp_fit, one)[0];
  return make_point(m, eg, el, ep);
}

double marginal_cdf(const MarginalModel& m, const MarginalPoint& pt, double y) {
  if (!(y > m.floor_mm)) {
    throw ConfigError("cdf is defined above the precipitation floor only");
  }
  if (y <= pt.u_total) {
    const double den =
        gamma_cdf_mean(pt.u_total - m.floor_mm, m.kappa, pt.mu);
    if (!(den > 0.0)) {
      throw NumericError("degenerate bulk: no Gamma mass below the threshold");
    }
    const double num = gamma_cdf_mean(y - m.floor_mm, m.kappa, pt.mu);
    return (1.0 - pt.p_u) * num / den;
  }
  return 1.0 - pt.p_u * (1.0 - gp_cdf(y - pt.u_total, pt.sigma, m.xi()));
}

double marginal_quantile(const MarginalModel& m, const MarginalPoint& pt,
                         double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ConfigError("quantile level must lie in (0, 1)");
  }
  const double bulk_mass = 1.0 - pt.p_u;
  if (p <= bulk_mass) {
    const double den =
        gamma_cdf_mean(pt.u_total - m.floor_mm, m.kappa, pt.mu);
    if (!(den > 0.0)) {
      throw NumericError("degenerate bulk: no Gamma mass below the threshold");
    }
    return m.floor_mm +
           gamma_quantile_mean(p / bulk_mass * den, m.kappa, pt.mu);
  }
  const double gp_p = 1.0 - (1.0 - p) / pt.p_u;
  return pt.u_total + gp_quantile(gp_p, pt.sigma, m.xi());
}

double return_level(const MarginalModel& m, const MarginalPoint& pt, double q) {
  if (!(q > 0.0 && q <= 0.1)) {
    throw ConfigError(
        "return level is defined for exceedance probabilities in (0, 0.1]");
  }
  if (q > pt.p_u) {
    throw ConfigError(
        "requested exceedance probability exceeds the tail mass here; the "
        "level would sit below the threshold");
  }
  return pt.u_total + gp_quantile(1.0 - q / pt.p_u, pt.sigma, m.xi());
}

ParetoField to_unit_pareto(const MarginalModel& m, const ObservationTable& table,
                           const StationSet& stations,
                           const CovariateSeries& covariate) {
  if (table.size() == 0) throw DataError("empty observation table");
  Date lo = table.date[0], hi = table.date[0];
  for (Date d : table.date) {
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }

  ParetoField field;
  const std::size_t n_days = static_cast<std::size_t>(hi - lo) + 1;
  field.dates.reserve(n_days);
  field.temp.reserve(n_days);
  for (Date d = lo; d <= hi; ++d) {
    field.dates.push_back(d);
    field.temp.push_back(covariate.at(d));
  }
  field.values = Eigen::MatrixXd::Constant(
      static_cast<Eigen::Index>(n_days),
      static_cast<Eigen::Index>(stations.size()), kNaN);

  double lat_sum = 0.0;
  for (const Station& s : stations.stations) lat_sum += s.lat;
  const Projection proj(lat_sum / static_cast<double>(stations.size()));
  for (const Station& s : stations.stations) {
    field.site_xy.push_back(proj.to_xy({s.lon, s.lat}));
  }

  std::vector<std::size_t> wet;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!is_missing(table.prcp[i]) && table.prcp[i] > m.floor_mm) {
      wet.push_back(i);
    }
  }
  if (wet.empty()) return field;

  const ColumnTable cols = marginal_columns(table, stations, covariate, wet);
  const Eigen::VectorXd eg = predict_eta(m.spec, m.gamma_fit, cols);
  const Eigen::VectorXd el = predict_eta(m.spec, m.logit_fit, cols);
  const Eigen::VectorXd ep = predict_eta(m.spec, m.gp_fit, cols);
  for (std::size_t r = 0; r < wet.size(); ++r) {
    const std::size_t i = wet[r];
    const Eigen::Index ri = static_cast<Eigen::Index>(r);
    const MarginalPoint pt = make_point(m, eg[ri], el[ri], ep[ri]);
    const double f = marginal_cdf(m, pt, table.prcp[i]);
    field.values(static_cast<Eigen::Index>(table.date[i] - lo),
                 static_cast<Eigen::Index>(table.station[i])) = 1.0 / (1.0 - f);
  }
  return field;
}

void qq_export(const MarginalModel& m, const ObservationTable& table,
               const StationSet& stations, const CovariateSeries& covariate,
               const std::string& path) {
  std::vector<std::size_t> wet;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!is_missing(table.prcp[i]) && table.prcp[i] > m.floor_mm) {
      wet.push_back(i);
    }
  }
  if (wet.empty()) throw DataError("no observations above the precipitation floor");

  const ColumnTable cols = marginal_columns(table, stations, covariate, wet);
  const Eigen::VectorXd eg = predict_eta(m.spec, m.gamma_fit, cols);
  const Eigen::VectorXd el = predict_eta(m.spec, m.logit_fit, cols);
  const Eigen::VectorXd ep = predict_eta(m.spec, m.gp_fit, cols);

  std::vector<double> pooled;
  std::vector<std::vector<double>> per_station(stations.size());
  for (std::size_t r = 0; r < wet.size(); ++r) {
    const Eigen::Index ri = static_cast<Eigen::Index>(r);
    const MarginalPoint pt = make_point(m, eg[ri], el[ri], ep[ri]);
    const double f = marginal_cdf(m, pt, table.prcp[wet[r]]);
    pooled.push_back(f);
    per_station[table.station[wet[r]]].push_back(f);
  }

  std::ostringstream out;
  out << "station,empirical,theoretical\n";
  const auto emit = [&out](const std::string& label, std::vector<double>& f) {
    std::sort(f.begin(), f.end());
    const double n = static_cast<double>(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      out << label << ','
          << format_double((static_cast<double>(i) + 0.5) / n) << ','
          << format_double(f[i]) << '\n';
    }
  };
  emit("ALL", pooled);
  for (std::size_t s = 0; s < stations.size(); ++s) {
    if (!per_station[s].empty()) emit(stations[s].id, per_station[s]);
  }
  write_text_file(path, out.str());
}

nlohmann::json marginal_to_json(const MarginalModel& m) {
  nlohmann::json j;
  j["floor_mm"] = m.floor_mm;
  j["bulk_quantile"] = m.bulk_quantile;
  j["kappa"] = m.kappa;
  j["cov_mean"] = m.cov_mean;
  j["cov_sd"] = m.cov_sd;
  j["spec"] = spec_to_json(m.spec);
  j["gamma_fit"] = fit_to_json(m.gamma_fit);
  j["logit_fit"] = fit_to_json(m.logit_fit);
  j["gp_fit"] = fit_to_json(m.gp_fit);
  return j;
}

MarginalModel marginal_from_json(const nlohmann::json& j) {
  MarginalModel m;
  m.floor_mm = j.at("floor_mm").get<double>();
  m.bulk_quantile = j.at("bulk_quantile").get<double>();
  m.kappa = j.at("kappa").get<double>();
  m.cov_mean = j.at("cov_mean").get<double>();
  m.cov_sd = j.at("cov_sd").get<double>();
  m.spec = spec_from_json(j.at("spec"));
  m.gamma_fit = fit_from_json(j.at("gamma_fit"));
  m.logit_fit = fit_from_json(j.at("logit_fit"));
  m.gp_fit = fit_from_json(j.at("gp_fit"));
  m.validate();
  return m;
}

void save_marginal(const MarginalModel& m, const std::string& path) {
  write_text_file(path, marginal_to_json(m).dump(2) + "\n");
}

MarginalModel load_marginal(const std::string& path) {
  return marginal_from_json(nlohmann::json::parse(read_text_file(path)));
}

}  // namespace spex
