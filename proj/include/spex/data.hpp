#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spex/dates.hpp"

namespace spex {

struct Station {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  double elev = 0.0;
};

struct StationSet {
  std::vector<Station> stations;

  std::size_t size() const { return stations.size(); }
  const Station& operator[](std::size_t i) const { return stations[i]; }
  /// Index of id, or throws DataError.
  std::size_t index_of(const std::string& id) const;

  void validate() const;  // unique ids, coordinates in range
};

/// Column-oriented daily observations; NaN encodes a missing measurement.
/// Station entries are indices into the companion StationSet.
struct ObservationTable {
  std::vector<std::uint32_t> station;
  std::vector<Date> date;
  std::vector<double> prcp;  // mm, >= 0 when present
  std::vector<double> tavg;  // degrees C

  std::size_t size() const { return date.size(); }
  void push(std::uint32_t st, Date d, double p, double t);
};

bool is_missing(double v);

StationSet load_stations(const std::string& path);
void save_stations(const StationSet& s, const std::string& path);

ObservationTable load_observations(const std::string& path,
                                   const StationSet& stations);
void save_observations(const ObservationTable& t, const StationSet& stations,
                       const std::string& path);

/// Season of each calendar date; defaults to meteorological months with
/// leap days in Winter.
struct SeasonDef {
  Season of(Date d) const { return season_of(d); }
};

/// Mean over years per (366-slot calendar day, station); cells backed by
/// fewer than min_count values are NaN. Rows are calendar_day_index - 1.
Eigen::MatrixXd daily_mean_over_years(const ObservationTable& t,
                                      std::size_t n_stations,
                                      int min_count = 10);

struct AnnualMeans {
  std::vector<int> years;  // consecutive, ascending
  Eigen::MatrixXd m;       // years x stations, NaN when under min_count
};

AnnualMeans annual_mean(const ObservationTable& t, std::size_t n_stations,
                        int min_count = 20);

std::map<Season, ObservationTable> split_by_season(const ObservationTable& t,
                                                   const SeasonDef& def = {});

struct SyntheticConfig {
  std::size_t n_stations = 25;
  Date first_day = 0;
  Date last_day = 0;
  double missing_fraction = 0.05;
  std::uint64_t seed = 1;

  // Wet-day and amount model. Amounts above the 10 mm floor follow a Gamma
  // bulk below its 0.9 quantile and a generalized Pareto beyond it, so the
  // exceedance-scale law is exactly the class the marginal fit assumes.
  double wet_probability = 0.55;
  double heavy_given_wet = 0.6;  // P(amount exceeds the 10 mm floor | wet)
  double gamma_shape = 1.1;
  double gp_xi = 0.12;

  void validate() const;
};

struct SyntheticData {
  StationSet stations;
  ObservationTable table;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

}  // namespace spex
