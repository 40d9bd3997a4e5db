#include "spex/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "spex/csv.hpp"
#include "spex/errors.hpp"
#include "spex/rng.hpp"
#include "spex/stats.hpp"

namespace spex {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

bool is_missing(double v) { return std::isnan(v); }

std::size_t StationSet::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < stations.size(); ++i) {
    if (stations[i].id == id) return i;
  }
  throw DataError("unknown station id: '" + id + "'");
}

void StationSet::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& s : stations) {
    if (!seen.insert(s.id).second) {
      throw DataError("duplicate station id: '" + s.id + "'");
    }
    if (s.lon < -180.0 || s.lon > 180.0) {
      throw DataError("longitude out of range for station '" + s.id + "'");
    }
    if (s.lat < -90.0 || s.lat > 90.0) {
      throw DataError("latitude out of range for station '" + s.id + "'");
    }
    if (!std::isfinite(s.elev)) {
      throw DataError("non-finite elevation for station '" + s.id + "'");
    }
  }
}

void ObservationTable::push(std::uint32_t st, Date d, double p, double t) {
  station.push_back(st);
  date.push_back(d);
  prcp.push_back(p);
  tavg.push_back(t);
}

StationSet load_stations(const std::string& path) {
  const auto csv = read_csv(path);
  const auto ci = csv.col("id");
  const auto clon = csv.col("lon");
  const auto clat = csv.col("lat");
  const auto celev = csv.col("elev");
  StationSet out;
  for (const auto& row : csv.rows) {
    Station s;
    s.id = row[ci];
    s.lon = parse_double(row[clon]);
    s.lat = parse_double(row[clat]);
    s.elev = parse_double(row[celev]);
    out.stations.push_back(std::move(s));
  }
  out.validate();
  return out;
}

void save_stations(const StationSet& s, const std::string& path) {
  std::string out = "id,lon,lat,elev\n";
  for (const auto& st : s.stations) {
    out += csv_escape(st.id) + "," + format_double(st.lon) + "," +
           format_double(st.lat) + "," + format_double(st.elev) + "\n";
  }
  write_text_file(path, out);
}

ObservationTable load_observations(const std::string& path,
                                   const StationSet& stations) {
  const auto csv = read_csv(path);
  const auto ci = csv.col("id");
  const auto cd = csv.col("date");
  const auto cp = csv.col("prcp");
  const auto ct = csv.col("tavg");

  std::unordered_map<std::string, std::uint32_t> idx;
  for (std::size_t i = 0; i < stations.size(); ++i) {
    idx.emplace(stations[i].id, static_cast<std::uint32_t>(i));
  }

  ObservationTable t;
  std::set<std::pair<std::uint32_t, Date>> seen;
  for (const auto& row : csv.rows) {
    const auto it = idx.find(row[ci]);
    if (it == idx.end()) {
      throw DataError("unknown station id: '" + row[ci] + "'");
    }
    const Date d = parse_date(row[cd]);
    if (!seen.emplace(it->second, d).second) {
      throw DataError("duplicate (station, date) row: " + row[ci] + " " +
                      row[cd]);
    }
    const auto p = parse_optional_double(row[cp]);
    const auto tv = parse_optional_double(row[ct]);
    if (p && *p < 0.0) {
      throw DataError("negative precipitation at " + row[ci] + " " + row[cd]);
    }
    t.push(it->second, d, p ? *p : kNaN, tv ? *tv : kNaN);
  }
  return t;
}

void save_observations(const ObservationTable& t, const StationSet& stations,
                       const std::string& path) {
  std::string out = "id,date,prcp,tavg\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    out += csv_escape(stations[t.station[i]].id) + "," +
           format_date(t.date[i]) + ",";
    if (!is_missing(t.prcp[i])) out += format_double(t.prcp[i]);
    out += ",";
    if (!is_missing(t.tavg[i])) out += format_double(t.tavg[i]);
    out += "\n";
  }
  write_text_file(path, out);
}

Eigen::MatrixXd daily_mean_over_years(const ObservationTable& t,
                                      std::size_t n_stations, int min_count) {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(366, n_stations);
  Eigen::MatrixXd count = Eigen::MatrixXd::Zero(366, n_stations);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (is_missing(t.prcp[i])) continue;
    const int slot = calendar_day_index(t.date[i]) - 1;
    sum(slot, t.station[i]) += t.prcp[i];
    count(slot, t.station[i]) += 1.0;
  }
  Eigen::MatrixXd out(366, n_stations);
  for (int r = 0; r < 366; ++r) {
    for (std::size_t c = 0; c < n_stations; ++c) {
      out(r, c) = (count(r, c) >= min_count) ? sum(r, c) / count(r, c) : kNaN;
    }
  }
  return out;
}

AnnualMeans annual_mean(const ObservationTable& t, std::size_t n_stations,
                        int min_count) {
  AnnualMeans out;
  if (t.size() == 0) {
    out.m.resize(0, static_cast<Eigen::Index>(n_stations));
    return out;
  }
  int ymin = year_of(t.date[0]), ymax = ymin;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const int y = year_of(t.date[i]);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  const int ny = ymax - ymin + 1;
  for (int y = ymin; y <= ymax; ++y) out.years.push_back(y);

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(ny, n_stations);
  Eigen::MatrixXd count = Eigen::MatrixXd::Zero(ny, n_stations);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (is_missing(t.prcp[i])) continue;
    const int r = year_of(t.date[i]) - ymin;
    sum(r, t.station[i]) += t.prcp[i];
    count(r, t.station[i]) += 1.0;
  }
  out.m.resize(ny, static_cast<Eigen::Index>(n_stations));
  for (int r = 0; r < ny; ++r) {
    for (std::size_t c = 0; c < n_stations; ++c) {
      out.m(r, c) = (count(r, c) >= min_count) ? sum(r, c) / count(r, c)
                                               : kNaN;
    }
  }
  return out;
}

std::map<Season, ObservationTable> split_by_season(const ObservationTable& t,
                                                   const SeasonDef& def) {
  std::map<Season, ObservationTable> out;
  out[Season::Winter];
  out[Season::Spring];
  out[Season::Summer];
  out[Season::Fall];
  for (std::size_t i = 0; i < t.size(); ++i) {
    out[def.of(t.date[i])].push(t.station[i], t.date[i], t.prcp[i],
                                t.tavg[i]);
  }
  return out;
}

void SyntheticConfig::validate() const {
  if (n_stations == 0) throw ConfigError("synthetic: need >= 1 station");
  if (last_day < first_day) throw ConfigError("synthetic: empty date range");
  if (missing_fraction < 0.0 || missing_fraction >= 1.0) {
    throw ConfigError("synthetic: missing fraction must lie in [0,1)");
  }
  if (!(wet_probability > 0.0 && wet_probability < 1.0) ||
      !(heavy_given_wet > 0.0 && heavy_given_wet <= 1.0)) {
    throw ConfigError("synthetic: probabilities must lie in (0,1)");
  }
  if (!(gamma_shape > 0.0)) throw ConfigError("synthetic: gamma shape <= 0");
  if (!(gp_xi > -0.5 && gp_xi < 1.0)) {
    throw ConfigError("synthetic: gp shape outside (-0.5, 1)");
  }
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticData out;
  const CounterRng root(cfg.seed);
  const CounterRng st_rng = root.substream(0x5741);     // station geometry
  const CounterRng day_rng = root.substream(0xDA71);    // shared day factors
  const CounterRng cell_rng = root.substream(0xCE11);   // per-cell draws

  for (std::size_t k = 0; k < cfg.n_stations; ++k) {
    Station s;
    s.id = "S" + std::to_string(k);
    s.lon = 12.0 + 4.0 * st_rng.uniform(3 * k);
    s.lat = 46.0 + 3.0 * st_rng.uniform(3 * k + 1);
    const double u = st_rng.uniform(3 * k + 2);
    s.elev = 200.0 + 1500.0 * u * u + 100.0 * (s.lat - 46.0);
    out.stations.stations.push_back(std::move(s));
  }

  const auto ndays = static_cast<std::uint64_t>(cfg.last_day - cfg.first_day) + 1;
  // Per-cell substream indices, one block of draws per (station, day).
  constexpr std::uint64_t kDrawsPerCell = 8;

  for (std::size_t k = 0; k < cfg.n_stations; ++k) {
    const auto& s = out.stations[k];
    for (std::uint64_t di = 0; di < ndays; ++di) {
      const Date d = cfg.first_day + static_cast<Date>(di);
      const double doy = static_cast<double>(day_of_year(d));
      const int year = year_of(d);
      const std::uint64_t base = (k * ndays + di) * kDrawsPerCell;

      // Shared daily factors induce co-occurrence of wet days and
      // spatially coherent temperatures.
      const double z_wet = day_rng.normal(2 * di);
      const double z_temp = day_rng.normal(2 * di + 1);

      // Wet/dry with latent Gaussian coupling.
      const double eps = cell_rng.normal(base);
      const double u_wet = norm_cdf(0.6 * z_wet + 0.8 * eps);
      double prcp = 0.0;
      if (u_wet < cfg.wet_probability) {
        const double v = cell_rng.uniform(base + 1);
        const double w = cell_rng.uniform(base + 2);
        if (v < cfg.heavy_given_wet) {
          // Exceedance over the 10 mm floor: Gamma bulk below its 0.9
          // quantile, GP beyond; continuous at the seam.
          const double mu = std::exp(2.2 +
                                     0.3 * std::cos(2.0 * M_PI *
                                                    (doy - 30.0) / 365.25) -
                                     0.2 * s.elev / 1000.0);
          if (w <= 0.9) {
            prcp = 10.0 + gamma_quantile_mean(w, cfg.gamma_shape, mu);
          } else {
            const double q90 = gamma_quantile_mean(0.9, cfg.gamma_shape, mu);
            const double sigma = 0.5 * q90 + 2.0;
            prcp = 10.0 + q90 +
                   gp_quantile((w - 0.9) / 0.1, sigma, cfg.gp_xi);
          }
        } else {
          prcp = 10.0 * w * w;  // drizzle below the floor
        }
      }

      double tavg = 10.0 +
                    8.0 * std::cos(2.0 * M_PI * (doy - 210.0) / 365.25) -
                    6.5 * s.elev / 1000.0 + 0.03 * (year - 2000) +
                    2.0 * z_temp + 0.8 * cell_rng.normal(base + 3);

      if (cell_rng.uniform(base + 4) < cfg.missing_fraction) prcp = kNaN;
      if (cell_rng.uniform(base + 5) < cfg.missing_fraction) tavg = kNaN;
      out.table.push(static_cast<std::uint32_t>(k), d, prcp, tavg);
    }
  }
  return out;
}

}  // namespace spex
