#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spex/dates.hpp"
#include "spex/geo.hpp"
#include "spex/parallel.hpp"

namespace spex {

/// Power-law semivariogram with covariate-driven range:
/// gamma(h; t) = (|h| / exp(lambda0 + lambda1 * temp_t))^nu.
struct Semivariogram {
  double nu = 1.0;
  double lambda0 = 0.0;
  double lambda1 = 0.0;

  void validate() const;  // nu in (0, 2]
  double log_range(double temp) const { return lambda0 + lambda1 * temp; }
  double operator()(double h, double temp) const;
};

/// Tail correlation chi(h; t) = 2 - 2 Phi(sqrt(gamma(h;t)/2)).
double chi(const Semivariogram& sv, double h, double temp);

/// Power-mean risk functional over the observed components:
/// r_theta(y) = (mean of y_k^theta)^(1/theta). Homogeneous of degree 1.
struct RiskFunctional {
  double theta = 1.0;

  double operator()(std::span<const double> y) const;
  /// d r / d y_j given the precomputed value r.
  double partial(std::span<const double> y, std::size_t j, double r) const;
};

/// One spatial extreme event: the observed subset of stations with their
/// unit-Pareto values on one day.
struct Event {
  std::int64_t day = 0;
  double temp = 0.0;
  std::vector<std::uint32_t> sites;  // indices into the site table
  std::vector<double> y;             // same length as sites, all > 0
  double r_value = 0.0;
};

struct EventSet {
  std::vector<Event> events;
  std::vector<XY> site_xy;  // coordinates per station index, km
  double threshold = 1.0;   // u
  double theta = 1.0;
};

/// Unit-Pareto transformed observations: rows are days, columns stations,
/// NaN marks missing (at or below the 10 mm floor, or absent).
struct ParetoField {
  std::vector<Date> dates;
  std::vector<double> temp;  // temp_t per row
  Eigen::MatrixXd values;
  std::vector<XY> site_xy;
};

/// Select events: days with >= min_obs observed values whose r_theta exceeds
/// the empirical `quantile` of qualifying-day r-values.
EventSet extract_events(const ParetoField& field, double theta,
                        double quantile = 0.8, int min_obs = 5);

/// log of the exponent-measure density at the event's observed components.
/// The first observed site acts as the reference; the value is invariant to
/// that choice.
double intensity_log_density(const Event& ev, const std::vector<XY>& site_xy,
                             const Semivariogram& sv, double temp);

struct IntensityDerivs {
  double log_density = 0.0;
  Eigen::VectorXd grad;       // d log-density / d y_j, observed order
  Eigen::VectorXd hess_diag;  // d^2 log-density / d y_j^2
};

IntensityDerivs intensity_derivs(const Event& ev,
                                 const std::vector<XY>& site_xy,
                                 const Semivariogram& sv, double temp);

/// Weighted gradient score of one event; u is the exceedance threshold of
/// the selecting risk functional.
double gradient_score(const Event& ev, const std::vector<XY>& site_xy,
                      const Semivariogram& sv, double u, double theta);

/// Per-event quantities that do not depend on the semivariogram parameters,
/// precomputed once so repeated objective evaluations only pay for the
/// gamma-dependent linear algebra.
struct PreparedEvent {
  double temp = 0.0;
  Eigen::VectorXd y;
  Eigen::VectorXd w;        // score weights w_j
  Eigen::VectorXd dw;       // d w_j / d y_j
  Eigen::MatrixXd log_dist; // log pairwise distances, observed order
};

struct PreparedEventSet {
  std::vector<PreparedEvent> events;
  std::vector<double> weight;  // resampling multiplicity (1 by default)
};

PreparedEventSet prepare_events(const EventSet& es);

/// Weight-averaged gradient score across events. Serial and Parallel
/// execution produce bitwise-identical sums (slot writes, ordered reduce).
double mean_score(const PreparedEventSet& pes, const Semivariogram& sv,
                  Exec exec = Exec::Serial);

struct FitOptions {
  double nu_min = 0.05;
  double nu_max = 2.0;
  std::optional<std::array<double, 3>> init;  // extra start (nu, l0, l1)
  int max_iter = 200;
  Exec exec = Exec::Serial;
};

struct FitReport {
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
  int failed_starts = 0;
  int total_starts = 0;
};

struct DependenceFit {
  Semivariogram estimate;
  std::vector<std::array<double, 3>> replicates;  // bootstrap draws
  int requested_replicates = 0;
  int failed_replicates = 0;
  FitReport report;
};

DependenceFit fit_gradient_score(const EventSet& es,
                                 const FitOptions& opts = {});

/// Base fit plus nonparametric bootstrap; replicate refits start from the
/// base estimate. Aborts when more than 10% of replicates fail.
DependenceFit bootstrap_fit(const EventSet& es, int replicates,
                            std::uint64_t seed, const FitOptions& opts = {});

/// Quantiles (2.5, 25, 50, 75, 97.5%) of one parameter's bootstrap draws;
/// param is 0 (nu), 1 (lambda0), or 2 (lambda1).
std::array<double, 5> replicate_quantiles(const DependenceFit& fit,
                                          int param);

nlohmann::json dependence_fit_to_json(const DependenceFit& fit);
DependenceFit dependence_fit_from_json(const nlohmann::json& j);

void write_events_csv(const EventSet& es, const std::string& path);

/// One row per (label, theta): point estimates with 2.5/97.5% bounds.
struct FitSummaryRow {
  std::string basin;
  std::string season;
  double theta = 1.0;
  DependenceFit fit;
};

void write_fit_summary_csv(const std::vector<FitSummaryRow>& rows,
                           const std::string& path);

}  // namespace spex
