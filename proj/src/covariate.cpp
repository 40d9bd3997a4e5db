#include "spex/covariate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "spex/csv.hpp"
#include "spex/errors.hpp"
#include "spex/optim.hpp"
#include "spex/parallel.hpp"
#include "spex/stats.hpp"

namespace spex {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double decimal_year(Date d) {
  return static_cast<double>(year_of(d)) +
         (static_cast<double>(day_of_year(d)) - 1.0) / 365.25;
}

}  // namespace

void DailySeries::validate() const {
  if (dates.size() != values.size()) {
    throw ConfigError("daily series dates and values differ in length");
  }
  for (std::size_t i = 1; i < dates.size(); ++i) {
    if (dates[i] <= dates[i - 1]) {
      throw ConfigError("daily series dates must be strictly increasing");
    }
  }
}

double CovariateSeries::at(Date d) const {
  const auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end() || *it != d) {
    throw DataError("covariate has no value for " + format_date(d));
  }
  return values[static_cast<std::size_t>(it - dates.begin())];
}

void BasinGrid::validate() const {
  if (points.empty()) throw ConfigError("basin grid is empty");
  if (points.size() != elev.size()) {
    throw ConfigError("basin grid points and elevations differ in length");
  }
}

namespace {

// Shared covariate columns for the kriging mean: lon, lat, elev, calendar
// day slot, and decimal year.
ColumnTable mean_columns(const std::vector<LonLat>& pos,
                         const std::vector<double>& elev,
                         const std::vector<Date>& dates) {
  ColumnTable t;
  auto& lon = t["lon"];
  auto& lat = t["lat"];
  auto& el = t["elev"];
  auto& day = t["day"];
  auto& year = t["year"];
  const std::size_t n = pos.size();
  lon.resize(n);
  lat.resize(n);
  el.resize(n);
  day.resize(n);
  year.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    lon[i] = pos[i].lon;
    lat[i] = pos[i].lat;
    el[i] = elev[i];
    day[i] = static_cast<double>(calendar_day_index(dates[i]));
    year[i] = decimal_year(dates[i]);
  }
  return t;
}

LinearPredictorSpec kriging_mean_spec(const StationSet& stations,
                                      const ObservationTable& table,
                                      bool include_year) {
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
  double y_lo = 1e300, y_hi = -1e300;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (is_missing(table.tavg[i])) continue;
    const double y = decimal_year(table.date[i]);
    y_lo = std::min(y_lo, y);
    y_hi = std::max(y_hi, y);
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
  if (include_year && y_hi - y_lo > 0.5) {
    spec.terms.push_back(
        {"year", BasisSpec::uniform("year", 6, y_lo, y_hi)});
  }
  spec.validate();
  return spec;
}

struct VarioLoss {
  const VariogramFit* bins;
  // A flat empirical variogram leaves the nugget/sill split unidentified
  // (any tau2 + s2 = const fits equally well as rho -> 0).  The ridge term
  // breaks the tie toward a small nugget; with zero-distance pairs present
  // their bin weight dominates it by orders of magnitude.
  double mean_weight = 0.0;
  double var_scale = 1.0;

  double operator()(const Eigen::VectorXd& p) const {
    const double s2 = std::exp(p[0]);
    const double rho = std::exp(p[1]);
    const double tau2 = std::exp(p[2]);
    double loss = 0.0;
    for (std::size_t b = 0; b < bins->bin_h.size(); ++b) {
      const double h = bins->bin_h[b];
      const double model =
          h > 0.0 ? tau2 + s2 * (1.0 - std::exp(-h / rho)) : tau2;
      const double d = bins->bin_gamma[b] - model;
      loss += bins->bin_count[b] * d * d;
    }
    const double frac = tau2 / var_scale;
    loss += 1e-3 * mean_weight * frac * frac;
    return loss;
  }
};

}  // namespace

KrigingModel fit_kriging_model(const ObservationTable& table,
                               const StationSet& stations,
                               bool include_year) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.station[i] >= stations.size()) {
      throw DataError("observation references an unknown station");
    }
    if (!is_missing(table.tavg[i])) rows.push_back(i);
  }
  if (rows.size() < 100) {
    std::ostringstream os;
    os << "need at least 100 temperature observations, got " << rows.size();
    throw DataError(os.str());
  }

  KrigingModel model;
  model.mean_spec = kriging_mean_spec(stations, table, include_year);
  model.has_year_term = false;
  for (const Term& t : model.mean_spec.terms) {
    if (t.name == "year") model.has_year_term = true;
  }

  std::vector<LonLat> pos(rows.size());
  std::vector<double> elev(rows.size());
  std::vector<Date> dates(rows.size());
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Station& st = stations[table.station[rows[i]]];
    pos[i] = {st.lon, st.lat};
    elev[i] = st.elev;
    dates[i] = table.date[rows[i]];
    y(static_cast<Eigen::Index>(i)) = table.tavg[rows[i]];
  }
  const ColumnTable cols = mean_columns(pos, elev, dates);
  const Design design = build_design(model.mean_spec, cols);
  model.mean_fit = fit_penalized(design, y, Family::GaussianIdentity);
  const Eigen::VectorXd resid = y - design.X * model.mean_fit.coef;

  double lat_sum = 0.0;
  for (const Station& s : stations.stations) lat_sum += s.lat;
  model.proj_ref_lat = lat_sum / static_cast<double>(stations.size());
  const Projection proj(model.proj_ref_lat);
  std::vector<XY> xy(stations.size());
  for (std::size_t k = 0; k < stations.size(); ++k) {
    xy[k] = proj.to_xy({stations[k].lon, stations[k].lat});
  }
  double max_dist = 0.0;
  for (std::size_t i = 0; i < xy.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      max_dist = std::max(max_dist, distance_km(xy[i], xy[j]));
    }
  }
  if (!(max_dist > 0.0)) {
    throw DataError("stations are co-located; no distance axis to bin");
  }

  // Pool squared residual differences over days, binned by distance up to
  // half the maximum separation; exactly co-located pairs estimate the
  // nugget alone.
  const double half_max = 0.5 * max_dist;
  const int nbins = 15;
  const double width = half_max / nbins;
  std::vector<double> sum(nbins, 0.0), cnt(nbins, 0.0);
  double sum0 = 0.0, cnt0 = 0.0;

  std::map<Date, std::vector<std::pair<std::uint32_t, double>>> by_day;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    by_day[dates[i]].push_back(
        {table.station[rows[i]], resid(static_cast<Eigen::Index>(i))});
  }
  for (const auto& [d, day_rows] : by_day) {
    for (std::size_t i = 0; i < day_rows.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const double h =
            distance_km(xy[day_rows[i].first], xy[day_rows[j].first]);
        const double g =
            0.5 * (day_rows[i].second - day_rows[j].second) *
            (day_rows[i].second - day_rows[j].second);
        if (h <= 0.0) {
          sum0 += g;
          cnt0 += 1.0;
        } else if (h <= half_max) {
          const int b = std::min(nbins - 1, static_cast<int>(h / width));
          sum[static_cast<std::size_t>(b)] += g;
          cnt[static_cast<std::size_t>(b)] += 1.0;
        }
      }
    }
  }

  VariogramFit& v = model.vario;
  if (cnt0 > 0.0) {
    v.bin_h.push_back(0.0);
    v.bin_gamma.push_back(sum0 / cnt0);
    v.bin_count.push_back(cnt0);
  }
  for (int b = 0; b < nbins; ++b) {
    if (cnt[static_cast<std::size_t>(b)] == 0.0) continue;
    v.bin_h.push_back((b + 0.5) * width);
    v.bin_gamma.push_back(sum[static_cast<std::size_t>(b)] /
                          cnt[static_cast<std::size_t>(b)]);
    v.bin_count.push_back(cnt[static_cast<std::size_t>(b)]);
  }
  if (v.bin_h.size() < 3) {
    throw NumericError("too few occupied distance bins for a variogram fit");
  }

  double var_r = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i) var_r += resid(i) * resid(i);
  var_r = std::max(var_r / static_cast<double>(resid.size()), 1e-12);

  VarioLoss loss{&v};
  loss.var_scale = var_r;
  for (double c : v.bin_count) loss.mean_weight += c;
  loss.mean_weight /= static_cast<double>(v.bin_count.size());
  const Objective obj = [&loss](const Eigen::VectorXd& p,
                                Eigen::VectorXd*) { return loss(p); };
  Eigen::VectorXd p0(3);
  p0 << std::log(0.95 * var_r), std::log(half_max / 2.0),
      std::log(0.05 * var_r);
  BfgsOptions bopts;
  bopts.max_iter = 300;
  bopts.grad_tol = 1e-8 * std::max(1.0, loss(p0));
  const OptimResult r = minimize_bfgs(obj, p0, bopts);
  if (!std::isfinite(r.value) || !r.x.allFinite()) {
    throw NumericError("variogram weighted least squares failed");
  }
  v.sigma2 = std::exp(r.x[0]);
  v.rho = std::exp(r.x[1]);
  v.nugget = std::exp(r.x[2]);
  return model;
}

BasinGrid make_basin_grid(const std::vector<LonLat>& polygon,
                          const StationSet& stations,
                          double resolution_deg) {
  if (polygon.size() < 3) {
    throw ConfigError("basin polygon needs at least 3 vertices");
  }
  if (stations.size() == 0) {
    throw ConfigError("basin grid needs stations for elevation");
  }
  if (!(resolution_deg > 0.0)) {
    throw ConfigError("grid resolution must be positive");
  }
  double lon_lo = 1e300, lon_hi = -1e300, lat_lo = 1e300, lat_hi = -1e300;
  for (const LonLat& p : polygon) {
    lon_lo = std::min(lon_lo, p.lon);
    lon_hi = std::max(lon_hi, p.lon);
    lat_lo = std::min(lat_lo, p.lat);
    lat_hi = std::max(lat_hi, p.lat);
  }

  BasinGrid grid;
  grid.resolution_deg = resolution_deg;
  for (double lat = lat_lo + 0.5 * resolution_deg; lat < lat_hi;
       lat += resolution_deg) {
    for (double lon = lon_lo + 0.5 * resolution_deg; lon < lon_hi;
         lon += resolution_deg) {
      if (point_in_polygon({lon, lat}, polygon)) grid.points.push_back({lon, lat});
    }
  }
  if (grid.points.empty()) {
    throw ConfigError("basin polygon contains no grid cells at this resolution");
  }

  double lat_sum = 0.0;
  for (const Station& s : stations.stations) lat_sum += s.lat;
  const Projection proj(lat_sum / static_cast<double>(stations.size()));
  grid.elev.resize(grid.points.size());
  for (std::size_t g = 0; g < grid.points.size(); ++g) {
    const XY pg = proj.to_xy(grid.points[g]);
    double wsum = 0.0, esum = 0.0;
    for (const Station& s : stations.stations) {
      const double d = distance_km(pg, proj.to_xy({s.lon, s.lat}));
      const double w = 1.0 / (d * d + 1e-6);
      wsum += w;
      esum += w * s.elev;
    }
    grid.elev[g] = esum / wsum;
  }
  return grid;
}

KrigeResult krige_day(const KrigingModel& model, const DayObservations& obs,
                      const BasinGrid& grid) {
  grid.validate();
  const std::size_t n = obs.tavg.size();
  if (n == 0) throw DataError("no observations for the day");
  if (obs.lonlat.size() != n || obs.elev.size() != n) {
    throw ConfigError("day observation arrays differ in length");
  }
  for (double t : obs.tavg) {
    if (!std::isfinite(t)) throw DataError("day observations must be finite");
  }

  const std::vector<Date> obs_dates(n, obs.date);
  const Eigen::VectorXd mean_obs = predict_eta(
      model.mean_spec, model.mean_fit,
      mean_columns(obs.lonlat, obs.elev, obs_dates));
  const std::vector<Date> grid_dates(grid.points.size(), obs.date);
  const Eigen::VectorXd mean_grid = predict_eta(
      model.mean_spec, model.mean_fit,
      mean_columns(grid.points, grid.elev, grid_dates));

  const Projection proj(model.proj_ref_lat);
  std::vector<XY> sxy(n);
  for (std::size_t i = 0; i < n; ++i) sxy[i] = proj.to_xy(obs.lonlat[i]);

  const double s2 = model.vario.sigma2;
  const double rho = model.vario.rho;
  Eigen::MatrixXd Sigma(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double c = s2 * std::exp(-distance_km(sxy[i], sxy[j]) / rho);
      Sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
      Sigma(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
    }
    Sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) +=
        model.vario.nugget;
  }

  KrigeResult out;
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success) {
    Sigma.diagonal().array() += 1e-8;
    llt.compute(Sigma);
    out.ridge_used = true;
    if (llt.info() != Eigen::Success) {
      throw NumericError("kriging system singular even after ridge");
    }
  }
  Eigen::VectorXd r(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    r(static_cast<Eigen::Index>(i)) =
        obs.tavg[i] - mean_obs(static_cast<Eigen::Index>(i));
  }
  const Eigen::VectorXd alpha = llt.solve(r);

  out.values.resize(static_cast<Eigen::Index>(grid.points.size()));
  for (std::size_t g = 0; g < grid.points.size(); ++g) {
    const XY pg = proj.to_xy(grid.points[g]);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += s2 * std::exp(-distance_km(pg, sxy[i]) / rho) *
             alpha(static_cast<Eigen::Index>(i));
    }
    out.values(static_cast<Eigen::Index>(g)) =
        mean_grid(static_cast<Eigen::Index>(g)) + acc;
  }
  return out;
}

DailySeries daily_basin_series(const KrigingModel& model,
                               const ObservationTable& table,
                               const StationSet& stations,
                               const BasinGrid& grid) {
  grid.validate();
  if (table.size() == 0) throw DataError("observation table is empty");
  Date lo = table.date[0], hi = table.date[0];
  for (Date d : table.date) {
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  std::map<Date, std::vector<std::size_t>> by_day;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.station[i] >= stations.size()) {
      throw DataError("observation references an unknown station");
    }
    if (!is_missing(table.tavg[i])) by_day[table.date[i]].push_back(i);
  }

  DailySeries s;
  for (Date d = lo; d <= hi; ++d) {
    s.dates.push_back(d);
    const auto it = by_day.find(d);
    if (it == by_day.end()) {
      s.values.push_back(kNaN);
      continue;
    }
    DayObservations day;
    day.date = d;
    for (std::size_t i : it->second) {
      const Station& st = stations[table.station[i]];
      day.lonlat.push_back({st.lon, st.lat});
      day.elev.push_back(st.elev);
      day.tavg.push_back(table.tavg[i]);
    }
    const KrigeResult kr = krige_day(model, day, grid);
    s.values.push_back(kr.values.mean());
  }
  return s;
}

DailySeries window_mean(const DailySeries& s, int window) {
  s.validate();
  if (window < 1) throw ConfigError("window must be at least 1 day");
  if (s.dates.size() < static_cast<std::size_t>(window)) {
    throw ConfigError("window longer than the series");
  }
  for (std::size_t i = 1; i < s.dates.size(); ++i) {
    if (s.dates[i] != s.dates[i - 1] + 1) {
      throw ConfigError("window mean needs a gap-free daily axis");
    }
  }
  DailySeries out;
  out.dates = s.dates;
  out.values.assign(s.values.size(), kNaN);
  for (std::size_t t = static_cast<std::size_t>(window) - 1;
       t < s.values.size(); ++t) {
    double acc = 0.0;
    bool ok = true;
    for (int k = 0; k < window; ++k) {
      const double v = s.values[t - static_cast<std::size_t>(k)];
      if (std::isnan(v)) {
        ok = false;
        break;
      }
      acc += v;
    }
    if (ok) out.values[t] = acc / window;
  }
  return out;
}

namespace {

CovariateSeries standardize_impl(const DailySeries& windowed, double m,
                                 double sd, int window) {
  CovariateSeries c;
  c.mean = m;
  c.sd = sd;
  c.window = window;
  for (std::size_t i = 0; i < windowed.dates.size(); ++i) {
    if (std::isnan(windowed.values[i])) continue;
    c.dates.push_back(windowed.dates[i]);
    c.values.push_back((windowed.values[i] - m) / sd);
  }
  return c;
}

}  // namespace

CovariateSeries standardize_training(const DailySeries& windowed, int window) {
  windowed.validate();
  std::vector<double> finite;
  for (double v : windowed.values) {
    if (!std::isnan(v)) finite.push_back(v);
  }
  if (finite.size() < 2) {
    throw DataError("too few covariate values to standardize");
  }
  const double m = mean(finite);
  const double sd = sample_sd(finite);
  if (!(sd > 1e-12)) {
    throw DataError("covariate has zero variance over the training period");
  }
  return standardize_impl(windowed, m, sd, window);
}

CovariateSeries standardize_with(const DailySeries& windowed, double mean,
                                 double sd, int window) {
  windowed.validate();
  if (!(sd > 0.0)) throw ConfigError("standardization sd must be positive");
  return standardize_impl(windowed, mean, sd, window);
}

CovariateSeries build_covariate(const KrigingModel& model,
                                const ObservationTable& table,
                                const StationSet& stations,
                                const BasinGrid& grid, int window) {
  const DailySeries daily = daily_basin_series(model, table, stations, grid);
  return standardize_training(window_mean(daily, window), window);
}

ScenarioSeries debias_gcm(const DailySeries& gcm, const DailySeries& obs,
                          const DebiasWindows& windows) {
  gcm.validate();
  obs.validate();
  ScenarioSeries out;
  for (int s = 0; s < kNumSeasons; ++s) {
    const auto season = static_cast<Season>(s);
    const auto slice_mean = [&](const DailySeries& ds, int y0,
                                int y1) -> double {
      double acc = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < ds.dates.size(); ++i) {
        if (std::isnan(ds.values[i])) continue;
        const int y = year_of(ds.dates[i]);
        if (y < y0 || y > y1) continue;
        if (season_of(ds.dates[i]) != season) continue;
        acc += ds.values[i];
        ++n;
      }
      if (n == 0) {
        throw DataError("empty " + season_name(season) +
                        " slice while debiasing");
      }
      return acc / static_cast<double>(n);
    };
    out.offset[static_cast<std::size_t>(s)] =
        slice_mean(gcm, windows.gcm_from, windows.gcm_to) -
        slice_mean(obs, windows.obs_from, windows.obs_to);
  }

  out.daily.dates = gcm.dates;
  out.daily.values.resize(gcm.values.size());
  for (std::size_t i = 0; i < gcm.dates.size(); ++i) {
    const auto s = static_cast<std::size_t>(season_of(gcm.dates[i]));
    out.daily.values[i] = gcm.values[i] - out.offset[s];
  }
  return out;
}

ScenarioSeries average_scenarios(const std::vector<ScenarioSeries>& members) {
  if (members.empty()) throw ConfigError("no scenario members to average");
  ScenarioSeries out;
  out.gcm = "AVG";
  out.scenario = members[0].scenario;
  out.daily.dates = members[0].daily.dates;
  for (const ScenarioSeries& m : members) {
    if (m.scenario != out.scenario) {
      throw ConfigError("cannot average mixed scenarios");
    }
    if (m.daily.dates != out.daily.dates) {
      throw ConfigError("scenario members cover different dates");
    }
  }
  const double k = static_cast<double>(members.size());
  out.daily.values.assign(out.daily.dates.size(), 0.0);
  for (std::size_t i = 0; i < out.daily.values.size(); ++i) {
    for (const ScenarioSeries& m : members) {
      out.daily.values[i] += m.daily.values[i];
    }
    out.daily.values[i] /= k;
  }
  for (std::size_t s = 0; s < kNumSeasons; ++s) {
    for (const ScenarioSeries& m : members) out.offset[s] += m.offset[s];
    out.offset[s] /= k;
  }
  return out;
}

namespace {

std::string series_csv(const std::vector<Date>& dates,
                       const std::vector<double>& values) {
  std::string out = "date,value\n";
  for (std::size_t i = 0; i < dates.size(); ++i) {
    out += format_date(dates[i]);
    out += ',';
    out += std::isnan(values[i]) ? "NA" : format_double(values[i]);
    out += '\n';
  }
  return out;
}

void series_from_csv(const CsvTable& t, std::vector<Date>& dates,
                     std::vector<double>& values) {
  const std::size_t di = t.col("date");
  const std::size_t vi = t.col("value");
  for (const auto& row : t.rows) {
    dates.push_back(parse_date(row[di]));
    const auto v = parse_optional_double(row[vi]);
    values.push_back(v ? *v : kNaN);
  }
}

}  // namespace

void save_covariate(const CovariateSeries& s, const std::string& csv_path,
                    const std::string& json_path) {
  write_text_file(csv_path, series_csv(s.dates, s.values));
  nlohmann::json j;
  j["mean"] = s.mean;
  j["sd"] = s.sd;
  j["window"] = s.window;
  write_text_file(json_path, j.dump(2) + "\n");
}

CovariateSeries load_covariate(const std::string& csv_path,
                               const std::string& json_path) {
  CovariateSeries s;
  series_from_csv(read_csv(csv_path), s.dates, s.values);
  const nlohmann::json j = nlohmann::json::parse(read_text_file(json_path));
  s.mean = j.at("mean").get<double>();
  s.sd = j.at("sd").get<double>();
  s.window = j.at("window").get<int>();
  return s;
}

void save_scenario(const ScenarioSeries& s, const std::string& csv_path,
                   const std::string& json_path) {
  write_text_file(csv_path, series_csv(s.daily.dates, s.daily.values));
  nlohmann::json j;
  j["gcm"] = s.gcm;
  j["scenario"] = s.scenario;
  nlohmann::json off;
  for (int k = 0; k < kNumSeasons; ++k) {
    off[season_name(static_cast<Season>(k))] =
        s.offset[static_cast<std::size_t>(k)];
  }
  j["offset"] = std::move(off);
  write_text_file(json_path, j.dump(2) + "\n");
}

ScenarioSeries load_scenario(const std::string& csv_path,
                             const std::string& json_path) {
  ScenarioSeries s;
  series_from_csv(read_csv(csv_path), s.daily.dates, s.daily.values);
  const nlohmann::json j = nlohmann::json::parse(read_text_file(json_path));
  s.gcm = j.at("gcm").get<std::string>();
  s.scenario = j.at("scenario").get<std::string>();
  for (int k = 0; k < kNumSeasons; ++k) {
    s.offset[static_cast<std::size_t>(k)] =
        j.at("offset").at(season_name(static_cast<Season>(k))).get<double>();
  }
  return s;
}

nlohmann::json kriging_model_to_json(const KrigingModel& m) {
  nlohmann::json j;
  j["mean_spec"] = spec_to_json(m.mean_spec);
  j["mean_fit"] = fit_to_json(m.mean_fit);
  j["vario"] = {{"sigma2", m.vario.sigma2}, {"rho", m.vario.rho},
                {"nugget", m.vario.nugget}, {"bin_h", m.vario.bin_h},
                {"bin_gamma", m.vario.bin_gamma},
                {"bin_count", m.vario.bin_count}};
  j["proj_ref_lat"] = m.proj_ref_lat;
  j["has_year_term"] = m.has_year_term;
  return j;
}

KrigingModel kriging_model_from_json(const nlohmann::json& j) {
  KrigingModel m;
  m.mean_spec = spec_from_json(j.at("mean_spec"));
  m.mean_fit = fit_from_json(j.at("mean_fit"));
  const auto& v = j.at("vario");
  m.vario.sigma2 = v.at("sigma2").get<double>();
  m.vario.rho = v.at("rho").get<double>();
  m.vario.nugget = v.at("nugget").get<double>();
  m.vario.bin_h = v.at("bin_h").get<std::vector<double>>();
  m.vario.bin_gamma = v.at("bin_gamma").get<std::vector<double>>();
  m.vario.bin_count = v.at("bin_count").get<std::vector<double>>();
  m.proj_ref_lat = j.at("proj_ref_lat").get<double>();
  m.has_year_term = j.at("has_year_term").get<bool>();
  return m;
}

}  // namespace spex
