#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "spex/covariate.hpp"
#include "spex/rpareto.hpp"

namespace spex {

// Tail-correlation level defining the effective range.
inline constexpr double kDefaultTailCutoff = 0.05;

// Distance (km) at which chi(sv, h, temp) falls to `cutoff`:
// h* = exp(lambda0 + lambda1*temp) * (2*z^2)^(1/nu), z = Phi^-1(1 - cutoff/2).
double effective_range(const Semivariogram& sv, double temp,
                       double cutoff = kDefaultTailCutoff);

// log h*, affine in temp with slope lambda1.
double log_effective_range(const Semivariogram& sv, double temp,
                           double cutoff = kDefaultTailCutoff);

// Seasonal log-range trajectory for one dependence fit under one covariate
// series. `log_range` is the trailing moving average reported downstream;
// `log_range_raw` keeps the per-season-year means it was computed from.
struct ExtentSeries {
  std::string basin;
  std::string scenario;  // "historical" for the training covariate
  std::string gcm;       // "OBS" or a climate-model label
  Season season = Season::Winter;
  double theta = 1.0;
  std::vector<int> years;
  std::vector<double> log_range;
  std::vector<double> log_range_raw;
  int smooth_years = 10;

  void validate() const;
};

struct ProjectOptions {
  double cutoff = kDefaultTailCutoff;
  int smooth_years = 10;
  // Training constants the series must carry; mixing fits with covariates
  // standardized differently is refused.
  std::optional<std::array<double, 2>> expect_standardization;
};

ExtentSeries project_series(const Semivariogram& sv,
                            const CovariateSeries& covariate, Season season,
                            const ProjectOptions& opts = {});

// One fitted dependence model plus the covariate it was trained on.
struct ExtentInput {
  std::string basin;
  Season season = Season::Winter;
  double theta = 1.0;
  DependenceFit fit;
  CovariateSeries historical;
};

struct GcmMember {
  std::string gcm;
  CovariateSeries series;
};

struct ScenarioSet {
  std::string scenario;
  std::vector<GcmMember> members;
};

struct ExtentSummary {
  std::string basin;
  std::string scenario;
  std::string gcm;
  Season season = Season::Winter;
  double theta = 1.0;
  double baseline_mean = 0.0;
  double future_mean = 0.0;
  double change = 0.0;
};

struct ExtentOptions {
  double cutoff = kDefaultTailCutoff;
  int smooth_years = 10;
  int baseline_from = 1965;
  int baseline_to = 2015;
  int future_from = 2016;
  int future_to = 2100;
};

struct ExtentReport {
  std::vector<ExtentSeries> series;
  std::vector<ExtentSummary> summary;
  std::vector<std::string> warnings;
  ExtentOptions options;
};

// Projects every fit under its training covariate and under each scenario
// member, plus a cross-model average: the member covariates are averaged
// pointwise first and the range mapping applied to the mean series. A member
// that cannot be projected is dropped with a warning; the average requires
// every member. Summary rows compare window means of the unsmoothed seasonal
// series and appear only when both windows are populated.
ExtentReport scenario_report(const std::vector<ExtentInput>& fits,
                             const std::vector<ScenarioSet>& scenarios,
                             const ExtentOptions& opts = {});

void write_extent_csv(const ExtentReport& report, const std::string& path);

nlohmann::json extent_manifest(const ExtentReport& report,
                               const std::vector<ExtentInput>& fits);
void write_extent_manifest(const ExtentReport& report,
                           const std::vector<ExtentInput>& fits,
                           const std::string& path);

}  // namespace spex
