#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "spex/covariate.hpp"
#include "spex/data.hpp"
#include "spex/dates.hpp"
#include "spex/gam.hpp"
#include "spex/rpareto.hpp"

namespace spex {

struct MarginalOptions {
  double floor_mm = 10.0;      // wet cutoff; days at or below it carry no mass
  double bulk_quantile = 0.9;  // Gamma quantile that places the tail threshold
  int min_exceedances = 30;
  Smoothing smoothing;  // shared by all three regressions; empty selects GCV
};

/// Three-part regression for daily precipitation above a fixed floor, all on
/// one shared linear-predictor structure (spatial surface, elevation, cyclic
/// day-of-year, linear temperature):
///   bulk   Gamma on (Y - floor) with mean exp(eta), shape kappa profiled;
///   chance logistic for P(Y > u | Y > floor), u = floor + Gamma quantile;
///   tail   generalized Pareto above u, scale u * exp(eta), one global shape.
struct MarginalModel {
  double floor_mm = 10.0;
  double bulk_quantile = 0.9;
  double kappa = 1.0;  // Gamma shape, profile MLE given the fitted means
  LinearPredictorSpec spec;
  PenalizedFit gamma_fit;
  PenalizedFit logit_fit;
  PenalizedFit gp_fit;
  double cov_mean = 0.0;  // standardization constants of the fit covariate
  double cov_sd = 1.0;

  double xi() const { return gp_fit.xi; }
  void validate() const;
};

/// Linear predictors evaluated at one (station, day), reduced to the four
/// numbers the distribution functions need.
struct MarginalPoint {
  double mu = 1.0;       // Gamma mean of (Y - floor)
  double u_total = 0.0;  // absolute threshold, floor + Gamma bulk quantile
  double p_u = 0.0;      // P(Y > u_total | Y > floor)
  double sigma = 1.0;    // GP scale at the threshold
};

MarginalModel fit_marginal(const ObservationTable& table,
                           const StationSet& stations,
                           const CovariateSeries& covariate,
                           const MarginalOptions& opts = {});

MarginalPoint marginal_point(const MarginalModel& m, const Station& st, Date d,
                             double temp);

/// Conditional cdf of Y given Y > floor; defined on (floor, inf) only.
/// Continuous at the threshold: the Gamma piece is renormalized to carry mass
/// exactly 1 - p_u below u.
double marginal_cdf(const MarginalModel& m, const MarginalPoint& pt, double y);

/// Inverse of marginal_cdf on (0, 1).
double marginal_quantile(const MarginalModel& m, const MarginalPoint& pt,
                         double p);

/// Level exceeded with conditional probability q given Y > floor. Defined on
/// the tail only: q in (0, 0.1] with q <= p_u; q == p_u returns the threshold.
double return_level(const MarginalModel& m, const MarginalPoint& pt, double q);

/// Transform observations to the unit Pareto scale: y_hat = 1 / (1 - F(y))
/// for wet values above the floor, NaN otherwise. Rows cover every calendar
/// day between the first and last observation; the covariate must hold a
/// value for each of them.
ParetoField to_unit_pareto(const MarginalModel& m, const ObservationTable& table,
                           const StationSet& stations,
                           const CovariateSeries& covariate);

/// Quantile-quantile pairs of the probability integral transform, pooled
/// ("ALL") and per station: columns station,empirical,theoretical with
/// empirical the (i - 0.5) / n plotting position and theoretical the sorted
/// model cdf values.
void qq_export(const MarginalModel& m, const ObservationTable& table,
               const StationSet& stations, const CovariateSeries& covariate,
               const std::string& path);

nlohmann::json marginal_to_json(const MarginalModel& m);
MarginalModel marginal_from_json(const nlohmann::json& j);

void save_marginal(const MarginalModel& m, const std::string& path);
MarginalModel load_marginal(const std::string& path);

}  // namespace spex
