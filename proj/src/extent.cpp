#include "spex/extent.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "spex/csv.hpp"
#include "spex/errors.hpp"
#include "spex/stats.hpp"

namespace spex {

namespace {

// Semivariogram level at which 2 - 2*Phi(sqrt(g/2)) equals the cutoff.
double gamma_at_cutoff(double cutoff) {
  if (!(cutoff > 0.0 && cutoff < 1.0)) {
    throw ConfigError("tail cutoff must lie in (0, 1)");
  }
  const double z = norm_quantile(1.0 - cutoff / 2.0);
  return 2.0 * z * z;
}

// December counts toward the following year's winter.
int season_year(Date d) {
  return year_of(d) + (month_of(d) == 12 ? 1 : 0);
}

std::vector<double> trailing_mean(const std::vector<int>& years,
                                  const std::vector<double>& raw, int window) {
  std::vector<double> out(raw.size());
  std::size_t lo = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    while (years[lo] <= years[i] - window) ++lo;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += raw[j];
    out[i] = s / static_cast<double>(i - lo + 1);
  }
  return out;
}

std::string series_label(const ExtentSeries& s) {
  std::ostringstream os;
  os << s.basin << "/" << season_name(s.season) << "/theta="
     << format_double(s.theta) << "/" << s.scenario << "/" << s.gcm;
  return os.str();
}

}  // namespace

double log_effective_range(const Semivariogram& sv, double temp,
                           double cutoff) {
  sv.validate();
  return sv.log_range(temp) + std::log(gamma_at_cutoff(cutoff)) / sv.nu;
}

double effective_range(const Semivariogram& sv, double temp, double cutoff) {
  return std::exp(log_effective_range(sv, temp, cutoff));
}

void ExtentSeries::validate() const {
  if (years.size() != log_range.size() ||
      years.size() != log_range_raw.size()) {
    throw DataError("extent series vectors have mismatched lengths");
  }
  if (years.empty()) throw DataError("extent series is empty");
  for (std::size_t i = 1; i < years.size(); ++i) {
    if (years[i] <= years[i - 1]) {
      throw DataError("extent series years are not strictly increasing");
    }
  }
  for (std::size_t i = 0; i < years.size(); ++i) {
    if (!std::isfinite(log_range[i]) || !std::isfinite(log_range_raw[i])) {
      throw NumericError("extent series contains a non-finite log-range");
    }
  }
  if (smooth_years < 1) throw ConfigError("smoothing window must be positive");
}

ExtentSeries project_series(const Semivariogram& sv,
                            const CovariateSeries& covariate, Season season,
                            const ProjectOptions& opts) {
  sv.validate();
  if (opts.smooth_years < 1) {
    throw ConfigError("smoothing window must be positive");
  }
  if (opts.expect_standardization) {
    const std::array<double, 2>& e = *opts.expect_standardization;
    if (covariate.mean != e[0] || covariate.sd != e[1]) {
      throw ConfigError(
          "covariate was standardized with different training constants");
    }
  }
  if (covariate.dates.size() != covariate.values.size()) {
    throw DataError("covariate series vectors have mismatched lengths");
  }

  const double shift = std::log(gamma_at_cutoff(opts.cutoff)) / sv.nu;
  std::map<int, std::pair<double, double>> acc;  // year -> (sum, count)
  for (std::size_t i = 0; i < covariate.dates.size(); ++i) {
    const Date d = covariate.dates[i];
    if (season_of(d) != season) continue;
    const double v = covariate.values[i];
    if (!std::isfinite(v)) continue;
    std::pair<double, double>& a = acc[season_year(d)];
    a.first += sv.log_range(v) + shift;
    a.second += 1.0;
  }
  if (acc.empty()) {
    throw DataError(std::string("no usable ") + season_name(season) +
                    " days in the covariate series");
  }

  ExtentSeries out;
  out.season = season;
  out.smooth_years = opts.smooth_years;
  for (const auto& [year, a] : acc) {
    out.years.push_back(year);
    out.log_range_raw.push_back(a.first / a.second);
  }
  out.log_range = trailing_mean(out.years, out.log_range_raw,
                                opts.smooth_years);
  return out;
}

ExtentReport scenario_report(const std::vector<ExtentInput>& fits,
                             const std::vector<ScenarioSet>& scenarios,
                             const ExtentOptions& opts) {
  ExtentReport rep;
  rep.options = opts;

  ProjectOptions popts;
  popts.cutoff = opts.cutoff;
  popts.smooth_years = opts.smooth_years;

  const auto add_summary = [&](const ExtentSeries& s) {
    double bsum = 0.0, fsum = 0.0;
    int bn = 0, fn = 0;
    for (std::size_t i = 0; i < s.years.size(); ++i) {
      const int y = s.years[i];
      if (y >= opts.baseline_from && y <= opts.baseline_to) {
        bsum += s.log_range_raw[i];
        ++bn;
      }
      if (y >= opts.future_from && y <= opts.future_to) {
        fsum += s.log_range_raw[i];
        ++fn;
      }
    }
    if (bn == 0 || fn == 0) return;
    ExtentSummary row;
    row.basin = s.basin;
    row.scenario = s.scenario;
    row.gcm = s.gcm;
    row.season = s.season;
    row.theta = s.theta;
    row.baseline_mean = bsum / bn;
    row.future_mean = fsum / fn;
    row.change = row.future_mean - row.baseline_mean;
    rep.summary.push_back(row);
  };

  const auto label = [](const ExtentInput& f, const std::string& scenario,
                        const std::string& gcm, ExtentSeries& s) {
    s.basin = f.basin;
    s.scenario = scenario;
    s.gcm = gcm;
    s.theta = f.theta;
  };

  for (const ExtentInput& f : fits) {
    const Semivariogram& sv = f.fit.estimate;
    popts.expect_standardization = {{f.historical.mean, f.historical.sd}};

    {
      ExtentSeries hist = project_series(sv, f.historical, f.season, popts);
      label(f, "historical", "OBS", hist);
      hist.validate();
      add_summary(hist);
      rep.series.push_back(std::move(hist));
    }

    for (const ScenarioSet& sc : scenarios) {
      std::vector<const CovariateSeries*> projected_members;
      bool all_members_ok = !sc.members.empty();
      if (sc.members.empty()) {
        rep.warnings.push_back(f.basin + "/" + season_name(f.season) +
                               "/theta=" + format_double(f.theta) + "/" +
                               sc.scenario + ": no members; omitted");
      }
      for (const GcmMember& m : sc.members) {
        try {
          ExtentSeries s = project_series(sv, m.series, f.season, popts);
          label(f, sc.scenario, m.gcm, s);
          s.validate();
          add_summary(s);
          rep.series.push_back(std::move(s));
          projected_members.push_back(&m.series);
        } catch (const std::runtime_error& err) {
          all_members_ok = false;
          ExtentSeries key;
          key.basin = f.basin;
          key.season = f.season;
          key.theta = f.theta;
          key.scenario = sc.scenario;
          key.gcm = m.gcm;
          rep.warnings.push_back(series_label(key) + ": " + err.what() +
                                 "; omitted");
        }
      }
      if (!all_members_ok || projected_members.empty()) continue;

      // Cross-model mean of the covariate itself, then the range mapping.
      try {
        CovariateSeries avg = *projected_members.front();
        for (std::size_t k = 1; k < projected_members.size(); ++k) {
          const CovariateSeries& m = *projected_members[k];
          if (m.dates != avg.dates) {
            throw ConfigError("scenario members cover different dates");
          }
          for (std::size_t i = 0; i < avg.values.size(); ++i) {
            avg.values[i] += m.values[i];
          }
        }
        const double inv = 1.0 / static_cast<double>(projected_members.size());
        for (double& v : avg.values) v *= inv;
        ExtentSeries s = project_series(sv, avg, f.season, popts);
        label(f, sc.scenario, "AVG", s);
        s.validate();
        add_summary(s);
        rep.series.push_back(std::move(s));
      } catch (const std::runtime_error& err) {
        ExtentSeries key;
        key.basin = f.basin;
        key.season = f.season;
        key.theta = f.theta;
        key.scenario = sc.scenario;
        key.gcm = "AVG";
        rep.warnings.push_back(series_label(key) + ": " + err.what() +
                               "; omitted");
      }
    }
  }
  return rep;
}

void write_extent_csv(const ExtentReport& report, const std::string& path) {
  std::string out = "basin,season,theta,scenario,gcm,year,log_range_km\n";
  for (const ExtentSeries& s : report.series) {
    for (std::size_t i = 0; i < s.years.size(); ++i) {
      out += csv_escape(s.basin);
      out += ',';
      out += season_name(s.season);
      out += ',';
      out += format_double(s.theta);
      out += ',';
      out += csv_escape(s.scenario);
      out += ',';
      out += csv_escape(s.gcm);
      out += ',';
      out += std::to_string(s.years[i]);
      out += ',';
      out += format_double(s.log_range[i]);
      out += '\n';
    }
  }
  write_text_file(path, out);
}

nlohmann::json extent_manifest(const ExtentReport& report,
                               const std::vector<ExtentInput>& fits) {
  nlohmann::json j;
  j["cutoff"] = report.options.cutoff;
  j["smooth_years"] = report.options.smooth_years;
  j["baseline_years"] = {report.options.baseline_from,
                         report.options.baseline_to};
  j["future_years"] = {report.options.future_from, report.options.future_to};

  nlohmann::json jfits = nlohmann::json::array();
  for (const ExtentInput& f : fits) {
    nlohmann::json jf;
    jf["basin"] = f.basin;
    jf["season"] = season_name(f.season);
    jf["theta"] = f.theta;
    jf["fit_hash"] =
        hex64(fnv1a64(dependence_fit_to_json(f.fit).dump()));
    jf["nu"] = f.fit.estimate.nu;
    jf["lambda0"] = f.fit.estimate.lambda0;
    jf["lambda1"] = f.fit.estimate.lambda1;
    jfits.push_back(jf);
  }
  j["fits"] = jfits;

  nlohmann::json jsum = nlohmann::json::array();
  for (const ExtentSummary& s : report.summary) {
    nlohmann::json js;
    js["basin"] = s.basin;
    js["season"] = season_name(s.season);
    js["theta"] = s.theta;
    js["scenario"] = s.scenario;
    js["gcm"] = s.gcm;
    js["baseline_mean_log_range"] = s.baseline_mean;
    js["future_mean_log_range"] = s.future_mean;
    js["change"] = s.change;
    jsum.push_back(js);
  }
  j["summary"] = jsum;
  j["warnings"] = report.warnings;
  return j;
}

void write_extent_manifest(const ExtentReport& report,
                           const std::vector<ExtentInput>& fits,
                           const std::string& path) {
  write_text_file(path, extent_manifest(report, fits).dump(2) + "\n");
}

}  // namespace spex
