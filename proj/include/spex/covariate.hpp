#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "spex/data.hpp"
#include "spex/dates.hpp"
#include "spex/gam.hpp"
#include "spex/geo.hpp"

namespace spex {

/// Daily values on a contiguous date axis; NaN marks days without data.
struct DailySeries {
  std::vector<Date> dates;
  std::vector<double> values;

  void validate() const;  // equal lengths, strictly increasing dates
};

/// Standardized trailing-window basin temperature. `mean` and `sd` are the
/// training-period constants on the pre-standardized scale; scenario series
/// reuse them rather than their own moments.
struct CovariateSeries {
  std::vector<Date> dates;
  std::vector<double> values;
  double mean = 0.0;
  double sd = 1.0;
  int window = 30;

  double at(Date d) const;  // throws DataError when d is absent
};

struct ScenarioSeries {
  std::string gcm;       // AWI, MIROC, NorESM, or AVG
  std::string scenario;  // e.g. SSP2-4.5, SSP5-8.5
  DailySeries daily;     // debiased temperature
  std::array<double, kNumSeasons> offset{};
};

/// Exponential residual covariance C(h) = sigma2 * exp(-h / rho) plus a
/// nugget on the diagonal, fitted to the binned empirical semivariogram by
/// weighted least squares (weights = pair counts).
struct VariogramFit {
  double sigma2 = 1.0;
  double rho = 1.0;  // km
  double nugget = 0.0;
  std::vector<double> bin_h;      // bin centers, km; 0 = co-located pairs
  std::vector<double> bin_gamma;  // empirical semivariance
  std::vector<double> bin_count;  // pair counts (WLS weights)
};

struct KrigingModel {
  LinearPredictorSpec mean_spec;
  PenalizedFit mean_fit;
  VariogramFit vario;
  double proj_ref_lat = 0.0;  // projection used for all distances
  bool has_year_term = true;  // dropped when refitting on projected data
};

KrigingModel fit_kriging_model(const ObservationTable& table,
                               const StationSet& stations,
                               bool include_year = true);

struct BasinGrid {
  std::vector<LonLat> points;
  std::vector<double> elev;
  double resolution_deg = 0.4622;

  void validate() const;  // non-empty, matching lengths
};

/// Lattice at `resolution_deg` clipped to the polygon; cell elevations are
/// inverse-distance-squared means of the station elevations.
BasinGrid make_basin_grid(const std::vector<LonLat>& polygon,
                          const StationSet& stations,
                          double resolution_deg = 0.4622);

struct DayObservations {
  Date date = 0;
  std::vector<LonLat> lonlat;
  std::vector<double> elev;
  std::vector<double> tavg;
};

struct KrigeResult {
  Eigen::VectorXd values;  // one temperature per grid point
  bool ridge_used = false;
};

/// Simple kriging of mean-model residuals, conditional on one day's data.
KrigeResult krige_day(const KrigingModel& model, const DayObservations& obs,
                      const BasinGrid& grid);

/// Spatial grid mean per day over the table's date span; days without any
/// temperature observation come out NaN.
DailySeries daily_basin_series(const KrigingModel& model,
                               const ObservationTable& table,
                               const StationSet& stations,
                               const BasinGrid& grid);

/// Trailing `window`-day mean ending at t inclusive; NaN when any window day
/// is NaN or precedes the series.
DailySeries window_mean(const DailySeries& s, int window);

CovariateSeries standardize_training(const DailySeries& windowed, int window);
CovariateSeries standardize_with(const DailySeries& windowed, double mean,
                                 double sd, int window);

CovariateSeries build_covariate(const KrigingModel& model,
                                const ObservationTable& table,
                                const StationSet& stations,
                                const BasinGrid& grid, int window = 30);

struct DebiasWindows {
  int gcm_from = 2015, gcm_to = 2020;  // inclusive years
  int obs_from = 2010, obs_to = 2015;
};

/// Per-season additive offset = mean(GCM over its window) - mean(obs over
/// its window); the returned daily series is GCM minus the offset.
ScenarioSeries debias_gcm(const DailySeries& gcm, const DailySeries& obs,
                          const DebiasWindows& windows = {});

ScenarioSeries average_scenarios(const std::vector<ScenarioSeries>& members);

void save_covariate(const CovariateSeries& s, const std::string& csv_path,
                    const std::string& json_path);
CovariateSeries load_covariate(const std::string& csv_path,
                               const std::string& json_path);

void save_scenario(const ScenarioSeries& s, const std::string& csv_path,
                   const std::string& json_path);
ScenarioSeries load_scenario(const std::string& csv_path,
                             const std::string& json_path);

nlohmann::json kriging_model_to_json(const KrigingModel& m);
KrigingModel kriging_model_from_json(const nlohmann::json& j);

}  // namespace spex
