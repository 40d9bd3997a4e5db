#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "spex/csv.hpp"
#include "spex/errors.hpp"
#include "spex/extent.hpp"
#include "spex/rng.hpp"

using namespace spex;

namespace {

// Standardized covariate with explicit training constants.
CovariateSeries flat_covariate(Date first, Date last, double value,
                               double mean = 0.0, double sd = 1.0) {
  CovariateSeries c;
  c.mean = mean;
  c.sd = sd;
  for (Date d = first; d <= last; ++d) {
    c.dates.push_back(d);
    c.values.push_back(value);
  }
  return c;
}

double bisect_range(const Semivariogram& sv, double temp, double target) {
  double lo = std::log(1e-10), hi = std::log(1e12);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (chi(sv, std::exp(mid), temp) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::exp(0.5 * (lo + hi));
}

}  // namespace

TEST_SUITE("extent") {

TEST_CASE("effective range matches the tail-correlation root") {
  const Semivariogram unit{1.0, 0.0, 0.0};
  const double h = effective_range(unit, 0.0);
  CHECK(h == doctest::Approx(7.6829).epsilon(1e-3 / 7.6829));
  CHECK(h == doctest::Approx(bisect_range(unit, 0.0, 0.05)).epsilon(1e-10));

  CounterRng rng(40);
  for (int k = 0; k < 100; ++k) {
    Semivariogram sv;
    sv.nu = 0.1 + 1.9 * rng.uniform(4 * (std::uint64_t)k);
    sv.lambda0 = -1.0 + 4.0 * rng.uniform(4 * (std::uint64_t)k + 1);
    sv.lambda1 = -1.0 + 2.0 * rng.uniform(4 * (std::uint64_t)k + 2);
    const double temp = -2.0 + 4.0 * rng.uniform(4 * (std::uint64_t)k + 3);
    const double hs = effective_range(sv, temp);
    CHECK(std::fabs(chi(sv, hs, temp) - 0.05) < 1e-6);
    CHECK(hs == doctest::Approx(bisect_range(sv, temp, 0.05)).epsilon(1e-8));
  }

  // Off-default cutoff still inverts chi.
  const double h01 = effective_range(unit, 0.0, 0.01);
  CHECK(std::fabs(chi(unit, h01, 0.0) - 0.01) < 1e-6);
  CHECK(h01 > h);
  CHECK_THROWS_AS(effective_range(unit, 0.0, 0.0), ConfigError);
}

TEST_CASE("log range is affine in temperature") {
  const Semivariogram sv{1.3, 0.7, -0.25};
  const double z = 1.959963984540054;
  const double intercept = sv.lambda0 + std::log(2.0 * z * z) / sv.nu;
  CHECK(log_effective_range(sv, 0.0) ==
        doctest::Approx(intercept).epsilon(1e-12));
  for (double t : {-3.0, -1.0, 0.5, 2.0}) {
    CHECK(log_effective_range(sv, t + 1.0) - log_effective_range(sv, t) ==
          doctest::Approx(sv.lambda1).epsilon(1e-10));
  }

  // Doubling the range scale doubles the range.
  const Semivariogram twice{sv.nu, sv.lambda0 + std::log(2.0), sv.lambda1};
  CHECK(effective_range(twice, 0.4) ==
        doctest::Approx(2.0 * effective_range(sv, 0.4)).epsilon(1e-12));

  // Negative slope: strictly decreasing in temperature.
  double prev = effective_range(sv, -2.0);
  for (double t = -1.5; t <= 2.0; t += 0.5) {
    const double cur = effective_range(sv, t);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("constant covariate projects to a constant series") {
  const Semivariogram sv{0.8, 1.1, -0.4};
  const CovariateSeries c =
      flat_covariate(make_date(1990, 1, 1), make_date(1999, 12, 31), 0.3);
  const ExtentSeries s = project_series(sv, c, Season::Summer);
  CHECK(s.years.size() == 10);
  const double expect = log_effective_range(sv, 0.3);
  for (std::size_t i = 0; i < s.years.size(); ++i) {
    CHECK(s.log_range_raw[i] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(s.log_range[i] == doctest::Approx(expect).epsilon(1e-12));
  }

  // Slope zero: scenario covariates cannot change the series.
  const Semivariogram flat{0.8, 1.1, 0.0};
  const CovariateSeries hot =
      flat_covariate(make_date(1990, 1, 1), make_date(1999, 12, 31), 2.7);
  const ExtentSeries a = project_series(flat, c, Season::Summer);
  const ExtentSeries b = project_series(flat, hot, Season::Summer);
  CHECK(a.log_range == b.log_range);
}

TEST_CASE("projection refuses mismatched standardization constants") {
  const Semivariogram sv{1.0, 0.0, -0.3};
  const CovariateSeries c = flat_covariate(make_date(2000, 1, 1),
                                           make_date(2002, 12, 31), 0.0,
                                           7.0, 1.5);
  ProjectOptions opts;
  opts.expect_standardization = {{7.0, 1.5}};
  CHECK_NOTHROW(project_series(sv, c, Season::Winter, opts));
  opts.expect_standardization = {{7.0, 1.6}};
  CHECK_THROWS_AS(project_series(sv, c, Season::Winter, opts), ConfigError);
}

TEST_CASE("december is aggregated into the following winter") {
  const Semivariogram sv{1.0, 0.0, 1.0};
  CovariateSeries c = flat_covariate(make_date(1999, 1, 1),
                                     make_date(2001, 12, 31), 0.0);
  for (std::size_t i = 0; i < c.dates.size(); ++i) {
    const Date d = c.dates[i];
    const bool bump = (year_of(d) == 2000 && month_of(d) == 12) ||
                      (year_of(d) == 2001 && month_of(d) <= 2);
    if (bump) c.values[i] = 2.0;
  }
  ProjectOptions opts;
  opts.smooth_years = 1;
  const ExtentSeries s = project_series(sv, c, Season::Winter, opts);
  const double base = log_effective_range(sv, 0.0);
  REQUIRE(s.years == std::vector<int>{1999, 2000, 2001, 2002});
  CHECK(s.log_range[0] == doctest::Approx(base).epsilon(1e-12));
  CHECK(s.log_range[1] == doctest::Approx(base).epsilon(1e-12));
  CHECK(s.log_range[2] == doctest::Approx(base + 2.0).epsilon(1e-12));
  CHECK(s.log_range[3] == doctest::Approx(base).epsilon(1e-12));
  // smooth_years = 1 is the identity smoother.
  CHECK(s.log_range == s.log_range_raw);
}

TEST_CASE("trailing moving average uses up to ten prior years") {
  const Semivariogram sv{1.0, 0.0, 1.0};
  CovariateSeries c;
  c.mean = 0.0;
  c.sd = 1.0;
  for (Date d = make_date(2000, 1, 1); d <= make_date(2029, 12, 31); ++d) {
    c.dates.push_back(d);
    c.values.push_back(static_cast<double>(year_of(d) - 2000));
  }
  const ExtentSeries s = project_series(sv, c, Season::Summer);
  const double base = log_effective_range(sv, 0.0);
  REQUIRE(s.years.size() == 30);
  for (std::size_t i = 0; i < s.years.size(); ++i) {
    CHECK(s.log_range_raw[i] ==
          doctest::Approx(base + static_cast<double>(i)).epsilon(1e-12));
    const std::size_t lo = i >= 9 ? i - 9 : 0;
    double acc = 0.0;
    for (std::size_t j = lo; j <= i; ++j) {
      acc += base + static_cast<double>(j);
    }
    CHECK(s.log_range[i] ==
          doctest::Approx(acc / static_cast<double>(i - lo + 1))
              .epsilon(1e-12));
  }
  // Steady state of a linear ramp: smoothed lags the raw series by 4.5.
  CHECK(s.log_range[29] == doctest::Approx(s.log_range_raw[29] - 4.5)
                               .epsilon(1e-12));
}

TEST_CASE("scenario report recovers the shift arithmetic") {
  ExtentInput input;
  input.basin = "Mississippi";
  input.season = Season::Spring;
  input.theta = 1.0;
  input.fit.estimate = {1.0, 2.0, -0.49};
  input.historical = flat_covariate(make_date(1965, 1, 1),
                                    make_date(2015, 12, 31), 0.0);

  const auto member = [](const std::string& gcm) {
    GcmMember m;
    m.gcm = gcm;
    m.series = flat_covariate(make_date(1965, 1, 1), make_date(2100, 12, 31),
                              0.0);
    for (std::size_t i = 0; i < m.series.dates.size(); ++i) {
      if (year_of(m.series.dates[i]) >= 2016) m.series.values[i] = 2.0;
    }
    return m;
  };
  ScenarioSet ssp;
  ssp.scenario = "SSP5-8.5";
  ssp.members = {member("AWI"), member("MIROC"), member("NorESM")};

  const ExtentReport rep = scenario_report({input}, {ssp});
  CHECK(rep.warnings.empty());
  // historical + 3 members + AVG
  REQUIRE(rep.series.size() == 5);
  CHECK(rep.series[0].scenario == "historical");
  CHECK(rep.series[0].gcm == "OBS");

  // Identical members make the average equal to each member.
  const ExtentSeries& awi = rep.series[1];
  const ExtentSeries& avg = rep.series[4];
  CHECK(avg.gcm == "AVG");
  CHECK(avg.log_range == awi.log_range);

  REQUIRE(rep.summary.size() == 4);  // members + AVG; obs has no future years
  for (const ExtentSummary& row : rep.summary) {
    CHECK(row.change == doctest::Approx(-0.98).epsilon(1e-12));
    CHECK(row.scenario == "SSP5-8.5");
  }

  // Empty scenario list: historical-only report.
  const ExtentReport hist_only = scenario_report({input}, {});
  CHECK(hist_only.series.size() == 1);
  CHECK(hist_only.summary.empty());
  CHECK(hist_only.warnings.empty());
}

TEST_CASE("mismatched member is omitted with a warning") {
  ExtentInput input;
  input.basin = "Danube";
  input.season = Season::Summer;
  input.theta = 1.0;
  input.fit.estimate = {1.0, 1.0, -0.2};
  input.historical = flat_covariate(make_date(1980, 1, 1),
                                    make_date(2015, 12, 31), 0.0, 5.0, 2.0);

  GcmMember good;
  good.gcm = "AWI";
  good.series = flat_covariate(make_date(2016, 1, 1), make_date(2100, 12, 31),
                               1.0, 5.0, 2.0);
  GcmMember bad;
  bad.gcm = "MIROC";
  bad.series = flat_covariate(make_date(2016, 1, 1), make_date(2100, 12, 31),
                              1.0, 0.0, 1.0);  // different training constants
  ScenarioSet ssp;
  ssp.scenario = "SSP2-4.5";
  ssp.members = {good, bad};

  const ExtentReport rep = scenario_report({input}, {ssp});
  // historical + the good member; no AVG without the full member set.
  CHECK(rep.series.size() == 2);
  REQUIRE(rep.warnings.size() == 1);
  CHECK(rep.warnings[0].find("MIROC") != std::string::npos);
  CHECK(rep.warnings[0].find("omitted") != std::string::npos);
}

TEST_CASE("extent artifacts are deterministic and well-formed") {
  ExtentInput input;
  input.basin = "Po";
  input.season = Season::Fall;
  input.theta = 0.5;
  input.fit.estimate = {0.9, 1.5, -0.3};
  input.historical = flat_covariate(make_date(2000, 1, 1),
                                    make_date(2009, 12, 31), 0.2);

  const ExtentReport rep = scenario_report({input}, {});
  const char* csv_path = "/tmp/spex_extent.csv";
  const char* man_path = "/tmp/spex_extent.json";
  write_extent_csv(rep, csv_path);
  write_extent_manifest(rep, {input}, man_path);

  const CsvTable t = read_csv(csv_path);
  REQUIRE(t.header.size() == 7);
  CHECK(t.col("basin") == 0);
  CHECK(t.col("log_range_km") == 6);
  CHECK(t.rows.size() == rep.series[0].years.size());
  CHECK(t.rows[0][0] == "Po");
  CHECK(t.rows[0][1] == "Fall");
  CHECK(t.rows[0][3] == "historical");
  CHECK(t.rows[0][4] == "OBS");
  const double logged = parse_double(t.rows[0][6]);
  CHECK(logged == rep.series[0].log_range[0]);

  const nlohmann::json j =
      nlohmann::json::parse(read_text_file(man_path));
  CHECK(j["cutoff"] == 0.05);
  CHECK(j["smooth_years"] == 10);
  CHECK(j["fits"].size() == 1);
  CHECK(j["fits"][0]["fit_hash"].get<std::string>().size() == 16);
  CHECK(j["warnings"].empty());

  const std::string first = read_text_file(csv_path);
  write_extent_csv(rep, csv_path);
  CHECK(read_text_file(csv_path) == first);
}

}  // TEST_SUITE
