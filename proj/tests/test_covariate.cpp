#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "spex/covariate.hpp"
#include "spex/csv.hpp"
#include "spex/errors.hpp"
#include "spex/rng.hpp"
#include "spex/stats.hpp"

using namespace spex;

namespace {

StationSet grid_stations(std::size_t nx, std::size_t ny, double lon0 = 12.0,
                         double lat0 = 46.0, double step = 0.15) {
  StationSet s;
  CounterRng rng(11);
  std::size_t k = 0;
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j, ++k) {
      Station st;
      st.id = "S" + std::to_string(k);
      st.lon = lon0 + step * static_cast<double>(i);
      st.lat = lat0 + step * static_cast<double>(j);
      st.elev = 300.0 + 400.0 * rng.uniform(k);
      s.stations.push_back(st);
    }
  }
  return s;
}

// Observation table whose tavg is `field(day, station)`; prcp missing.
ObservationTable table_from(const StationSet& st, Date first, int ndays,
                            const std::function<double(int, std::size_t)>& f) {
  ObservationTable t;
  for (int d = 0; d < ndays; ++d) {
    for (std::size_t k = 0; k < st.size(); ++k) {
      t.push(static_cast<std::uint32_t>(k), first + d,
             std::numeric_limits<double>::quiet_NaN(), f(d, k));
    }
  }
  return t;
}

KrigingModel flat_model(double sigma2, double rho, double nugget,
                        double ref_lat = 46.0) {
  KrigingModel m;
  m.mean_spec.intercept = true;
  m.mean_fit.coef = Eigen::VectorXd::Zero(1);
  m.mean_fit.family = Family::GaussianIdentity;
  m.vario.sigma2 = sigma2;
  m.vario.rho = rho;
  m.vario.nugget = nugget;
  m.proj_ref_lat = ref_lat;
  return m;
}

}  // namespace

TEST_SUITE("covariate") {

TEST_CASE("white-noise residuals give a short-range variogram") {
  const StationSet st = grid_stations(7, 6);
  CounterRng rng(505);
  const double noise_sd = std::sqrt(3.0);
  const ObservationTable t =
      table_from(st, make_date(2003, 1, 1), 60, [&](int d, std::size_t k) {
        return noise_sd * rng.normal(static_cast<std::uint64_t>(d) * 100 + k);
      });

  const KrigingModel m = fit_kriging_model(t, st);
  CHECK(m.vario.sigma2 == doctest::Approx(3.0).epsilon(0.10));
  CHECK(m.vario.nugget < 0.15 * m.vario.sigma2);

  // Effective range of the exponential model: correlation below 5% within a
  // fraction of the observed span.
  double max_h = 0.0;
  for (double h : m.vario.bin_h) max_h = std::max(max_h, h);
  CHECK(3.0 * m.vario.rho < max_h);
}

TEST_CASE("exponential field parameters are recovered") {
  const StationSet st = grid_stations(20, 10, 10.0, 44.0, 0.22);
  const std::size_t K = st.size();
  REQUIRE(K == 200);

  const Projection proj(45.0);
  std::vector<XY> xy(K);
  for (std::size_t k = 0; k < K; ++k) {
    xy[k] = proj.to_xy({st[k].lon, st[k].lat});
  }
  const double sigma2 = 2.0, rho = 50.0;
  Eigen::MatrixXd C(K, K);
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          sigma2 * std::exp(-distance_km(xy[i], xy[j]) / rho);
    }
  }
  C.diagonal().array() += 1e-8;
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(C).matrixL();

  const int ndays = 100;
  Eigen::MatrixXd field(ndays, K);
  CounterRng rng(99);
  for (int d = 0; d < ndays; ++d) {
    Eigen::VectorXd z(K);
    for (std::size_t k = 0; k < K; ++k) {
      z(static_cast<Eigen::Index>(k)) =
          rng.normal(static_cast<std::uint64_t>(d) * K + k);
    }
    field.row(d) = (L * z).transpose();
  }
  const ObservationTable t =
      table_from(st, make_date(2004, 1, 1), ndays, [&](int d, std::size_t k) {
        return 5.0 + field(d, static_cast<Eigen::Index>(k));
      });

  const KrigingModel m = fit_kriging_model(t, st);
  CHECK(m.vario.sigma2 == doctest::Approx(sigma2).epsilon(0.20));
  CHECK(m.vario.rho == doctest::Approx(rho).epsilon(0.20));
  CHECK(m.vario.nugget < 0.25 * sigma2);
}

TEST_CASE("kriging reproduces observations exactly without nugget") {
  const KrigingModel m = flat_model(2.0, 30.0, 0.0);
  CounterRng rng(7);
  DayObservations obs;
  obs.date = make_date(2001, 7, 1);
  BasinGrid grid;
  grid.resolution_deg = 0.1;
  for (int k = 0; k < 12; ++k) {
    const LonLat p = {12.0 + 0.8 * rng.uniform(2 * (std::uint64_t)k),
                      46.0 + 0.6 * rng.uniform(2 * (std::uint64_t)k + 1)};
    obs.lonlat.push_back(p);
    obs.elev.push_back(400.0);
    obs.tavg.push_back(5.0 + 10.0 * rng.normal(100 + (std::uint64_t)k));
    grid.points.push_back(p);
    grid.elev.push_back(400.0);
  }
  const KrigeResult kr = krige_day(m, obs, grid);
  CHECK_FALSE(kr.ridge_used);
  for (int k = 0; k < 12; ++k) {
    CHECK(kr.values(k) == doctest::Approx(obs.tavg[(std::size_t)k])
                              .epsilon(1e-6));
  }
}

TEST_CASE("constant observations krige to the constant") {
  const StationSet st = grid_stations(6, 6);
  const ObservationTable t = table_from(
      st, make_date(2002, 1, 1), 40, [](int, std::size_t) { return 7.0; });
  const KrigingModel m = fit_kriging_model(t, st);

  const std::vector<LonLat> poly = {{12.0, 46.0}, {12.8, 46.0},
                                    {12.8, 46.8}, {12.0, 46.8}};
  const BasinGrid grid = make_basin_grid(poly, st, 0.2);
  DayObservations obs;
  obs.date = make_date(2002, 2, 1);
  for (std::size_t k = 0; k < st.size(); ++k) {
    obs.lonlat.push_back({st[k].lon, st[k].lat});
    obs.elev.push_back(st[k].elev);
    obs.tavg.push_back(7.0);
  }
  const KrigeResult kr = krige_day(m, obs, grid);
  for (Eigen::Index g = 0; g < kr.values.size(); ++g) {
    CHECK(kr.values(g) == doctest::Approx(7.0).epsilon(1e-6));
  }
}

TEST_CASE("trailing window mean matches the arithmetic example") {
  DailySeries s;
  for (int i = 0; i < 100; ++i) {
    s.dates.push_back(make_date(2010, 1, 1) + i);
    s.values.push_back(static_cast<double>(i + 1));
  }
  const DailySeries w = window_mean(s, 30);
  CHECK(std::isnan(w.values[28]));
  CHECK(w.values[29] == doctest::Approx(15.5).epsilon(1e-12));
  CHECK(w.values[99] == doctest::Approx(85.5).epsilon(1e-12));

  // A single missing day poisons exactly the windows covering it.
  DailySeries gap = s;
  gap.values[50] = std::numeric_limits<double>::quiet_NaN();
  const DailySeries wg = window_mean(gap, 30);
  CHECK(std::isnan(wg.values[50]));
  CHECK(std::isnan(wg.values[79]));
  CHECK_FALSE(std::isnan(wg.values[80]));
  CHECK(wg.values[99] == w.values[99]);

  DailySeries tiny;
  tiny.dates = {make_date(2010, 1, 1), make_date(2010, 1, 2)};
  tiny.values = {1.0, 2.0};
  CHECK_THROWS_AS(window_mean(tiny, 30), ConfigError);
}

TEST_CASE("standardization is exact and rejects degenerate series") {
  DailySeries w;
  CounterRng rng(17);
  for (int i = 0; i < 200; ++i) {
    w.dates.push_back(make_date(2011, 1, 1) + i);
    w.values.push_back(3.0 + 2.0 * rng.normal((std::uint64_t)i));
  }
  const CovariateSeries c = standardize_training(w, 30);
  CHECK(std::fabs(mean(c.values)) < 1e-10);
  CHECK(sample_sd(c.values) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(c.at(w.dates[5]) == c.values[5]);
  CHECK_THROWS_AS(c.at(make_date(1990, 1, 1)), DataError);

  DailySeries flat;
  for (int i = 0; i < 50; ++i) {
    flat.dates.push_back(make_date(2011, 1, 1) + i);
    flat.values.push_back(4.2);
  }
  CHECK_THROWS_AS(standardize_training(flat, 30), DataError);
}

TEST_CASE("temperature shift moves the covariate by the same constant") {
  const StationSet st = grid_stations(5, 5);
  CounterRng rng(31);
  const auto base = [&](int d, std::size_t k) {
    return 8.0 + 4.0 * std::sin(0.05 * d) +
           1.5 * rng.normal(static_cast<std::uint64_t>(d) * 25 + k);
  };
  const ObservationTable t1 = table_from(st, make_date(2005, 1, 1), 70, base);
  const ObservationTable t2 =
      table_from(st, make_date(2005, 1, 1), 70,
                 [&](int d, std::size_t k) { return base(d, k) + 2.5; });

  const std::vector<LonLat> poly = {{12.0, 46.0}, {12.7, 46.0},
                                    {12.7, 46.7}, {12.0, 46.7}};
  const BasinGrid grid = make_basin_grid(poly, st, 0.25);

  const KrigingModel m1 = fit_kriging_model(t1, st);
  const KrigingModel m2 = fit_kriging_model(t2, st);
  const DailySeries d1 = daily_basin_series(m1, t1, st, grid);
  const DailySeries d2 = daily_basin_series(m2, t2, st, grid);
  REQUIRE(d1.values.size() == d2.values.size());
  for (std::size_t i = 0; i < d1.values.size(); ++i) {
    CHECK(d2.values[i] - d1.values[i] == doctest::Approx(2.5).epsilon(1e-7));
  }

  const CovariateSeries c1 = build_covariate(m1, t1, st, grid, 30);
  const CovariateSeries c2 = build_covariate(m2, t2, st, grid, 30);
  CHECK(c2.mean - c1.mean == doctest::Approx(2.5).epsilon(1e-7));
  CHECK(c2.sd == doctest::Approx(c1.sd).epsilon(1e-7));
  for (std::size_t i = 0; i < c1.values.size(); ++i) {
    CHECK(c2.values[i] == doctest::Approx(c1.values[i]).epsilon(1e-6));
  }
}

TEST_CASE("covariate is invariant to station enumeration order") {
  const StationSet st = grid_stations(5, 4);
  CounterRng rng(63);
  const ObservationTable t =
      table_from(st, make_date(2006, 1, 1), 45, [&](int d, std::size_t k) {
        return 6.0 + 2.0 * rng.normal(static_cast<std::uint64_t>(d) * 20 + k);
      });

  // Reverse the station set and remap the table's indices.
  StationSet rev;
  rev.stations.assign(st.stations.rbegin(), st.stations.rend());
  ObservationTable tr = t;
  for (auto& sidx : tr.station) {
    sidx = static_cast<std::uint32_t>(st.size() - 1 - sidx);
  }

  const std::vector<LonLat> poly = {{12.0, 46.0}, {12.7, 46.0},
                                    {12.7, 46.6}, {12.0, 46.6}};
  const BasinGrid g1 = make_basin_grid(poly, st, 0.3);
  const BasinGrid g2 = make_basin_grid(poly, rev, 0.3);
  const CovariateSeries c1 =
      build_covariate(fit_kriging_model(t, st), t, st, g1, 30);
  const CovariateSeries c2 =
      build_covariate(fit_kriging_model(tr, rev), tr, rev, g2, 30);
  CHECK(c1.dates == c2.dates);
  CHECK(c1.mean == c2.mean);
  CHECK(c1.sd == c2.sd);
  CHECK(c1.values == c2.values);
}

TEST_CASE("seasonal debias offsets are recovered exactly") {
  const auto season_base = [](Date d) {
    switch (season_of(d)) {
      case Season::Winter: return 0.0;
      case Season::Spring: return 1.0;
      case Season::Summer: return 2.0;
      case Season::Fall: return 3.0;
    }
    return 0.0;
  };
  const auto bias = [](Date d) {
    switch (season_of(d)) {
      case Season::Winter: return 1.0;
      case Season::Spring: return 0.5;
      case Season::Summer: return -1.0;
      case Season::Fall: return 0.0;
    }
    return 0.0;
  };

  DailySeries obs;
  for (Date d = make_date(2010, 1, 1); d <= make_date(2015, 12, 31); ++d) {
    obs.dates.push_back(d);
    obs.values.push_back(season_base(d));
  }
  DailySeries gcm;
  for (Date d = make_date(2015, 1, 1); d <= make_date(2022, 12, 31); ++d) {
    gcm.dates.push_back(d);
    gcm.values.push_back(season_base(d) + bias(d));
  }

  const ScenarioSeries sc = debias_gcm(gcm, obs);
  CHECK(sc.offset[(std::size_t)Season::Winter] ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sc.offset[(std::size_t)Season::Spring] ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sc.offset[(std::size_t)Season::Summer] ==
        doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(sc.offset[(std::size_t)Season::Fall] ==
        doctest::Approx(0.0).epsilon(1e-12));
  for (std::size_t i = 0; i < sc.daily.values.size(); ++i) {
    CHECK(sc.daily.values[i] ==
          doctest::Approx(season_base(sc.daily.dates[i])).epsilon(1e-12));
  }

  // Identical means produce zero offsets and an unchanged series.
  DailySeries same = obs;
  const ScenarioSeries zero = debias_gcm(same, obs, {2010, 2015, 2010, 2015});
  for (double o : zero.offset) CHECK(o == doctest::Approx(0.0).epsilon(1e-12));

  // A GCM window with no overlap signals.
  DailySeries far_future;
  for (Date d = make_date(2050, 1, 1); d <= make_date(2055, 12, 31); ++d) {
    far_future.dates.push_back(d);
    far_future.values.push_back(1.0);
  }
  CHECK_THROWS_AS(debias_gcm(far_future, obs), DataError);
}

TEST_CASE("scenario averaging is a pointwise mean") {
  const auto make = [](double slope, const std::string& gcm) {
    ScenarioSeries s;
    s.gcm = gcm;
    s.scenario = "SSP5-8.5";
    for (int i = 0; i < 400; ++i) {
      s.daily.dates.push_back(make_date(2020, 1, 1) + i);
      s.daily.values.push_back(slope * i);
    }
    return s;
  };
  const ScenarioSeries avg =
      average_scenarios({make(1.0, "AWI"), make(2.0, "MIROC"),
                         make(3.0, "NorESM")});
  CHECK(avg.gcm == "AVG");
  CHECK(avg.scenario == "SSP5-8.5");
  for (int i = 0; i < 400; i += 37) {
    CHECK(avg.daily.values[(std::size_t)i] ==
          doctest::Approx(2.0 * i).epsilon(1e-12));
  }

  ScenarioSeries pos = make(1.0, "AWI");
  ScenarioSeries neg = make(-1.0, "MIROC");
  const ScenarioSeries zero = average_scenarios({pos, neg});
  for (double v : zero.daily.values) CHECK(v == 0.0);

  ScenarioSeries other = make(1.0, "AWI");
  other.scenario = "SSP2-4.5";
  CHECK_THROWS_AS(average_scenarios({pos, other}), ConfigError);
  ScenarioSeries short_series = make(1.0, "AWI");
  short_series.daily.dates.pop_back();
  short_series.daily.values.pop_back();
  CHECK_THROWS_AS(average_scenarios({pos, short_series}), ConfigError);
}

TEST_CASE("basin grid construction and elevations") {
  StationSet st;
  st.stations.push_back({"C", 12.5, 46.5, 500.0});
  const std::vector<LonLat> poly = {{12.0, 46.0}, {13.0, 46.0},
                                    {13.0, 47.0}, {12.0, 47.0}};
  const BasinGrid g = make_basin_grid(poly, st, 0.25);
  CHECK(g.points.size() == 16);
  for (double e : g.elev) CHECK(e == doctest::Approx(500.0).epsilon(1e-12));
  for (const LonLat& p : g.points) {
    CHECK(point_in_polygon(p, poly));
  }
  CHECK_THROWS_AS(make_basin_grid(poly, st, 5.0), ConfigError);
  const std::vector<LonLat> line = {{12.0, 46.0}, {13.0, 46.0}};
  CHECK_THROWS_AS(make_basin_grid(line, st, 0.25), ConfigError);
}

TEST_CASE("series and model serialization round-trips") {
  CovariateSeries c;
  c.mean = 7.25;
  c.sd = 1.375;
  c.window = 30;
  CounterRng rng(3);
  for (int i = 0; i < 40; ++i) {
    c.dates.push_back(make_date(2012, 3, 1) + i);
    c.values.push_back(rng.normal((std::uint64_t)i));
  }
  save_covariate(c, "/tmp/spex_cov.csv", "/tmp/spex_cov.json");
  const CovariateSeries cc =
      load_covariate("/tmp/spex_cov.csv", "/tmp/spex_cov.json");
  CHECK(cc.dates == c.dates);
  CHECK(cc.values == c.values);
  CHECK(cc.mean == c.mean);
  CHECK(cc.sd == c.sd);
  CHECK(cc.window == c.window);

  ScenarioSeries s;
  s.gcm = "MIROC";
  s.scenario = "SSP2-4.5";
  s.offset = {0.5, -0.25, 1.0, 0.0};
  for (int i = 0; i < 20; ++i) {
    s.daily.dates.push_back(make_date(2030, 1, 1) + i);
    s.daily.values.push_back(0.3 * i);
  }
  s.daily.values[7] = std::numeric_limits<double>::quiet_NaN();
  save_scenario(s, "/tmp/spex_scen.csv", "/tmp/spex_scen.json");
  const ScenarioSeries ss =
      load_scenario("/tmp/spex_scen.csv", "/tmp/spex_scen.json");
  CHECK(ss.gcm == s.gcm);
  CHECK(ss.scenario == s.scenario);
  CHECK(ss.offset == s.offset);
  CHECK(ss.daily.dates == s.daily.dates);
  CHECK(std::isnan(ss.daily.values[7]));
  CHECK(ss.daily.values[6] == s.daily.values[6]);

  const StationSet stg = grid_stations(4, 4);
  CounterRng nrng(8);
  const ObservationTable t =
      table_from(stg, make_date(2001, 1, 1), 40, [&](int d, std::size_t k) {
        return 5.0 + nrng.normal(static_cast<std::uint64_t>(d) * 16 + k);
      });
  const KrigingModel m = fit_kriging_model(t, stg);
  const KrigingModel back = kriging_model_from_json(kriging_model_to_json(m));
  CHECK(back.vario.sigma2 == m.vario.sigma2);
  CHECK(back.vario.rho == m.vario.rho);
  CHECK(back.proj_ref_lat == m.proj_ref_lat);
  CHECK(back.mean_fit.coef.size() == m.mean_fit.coef.size());

  DayObservations obs;
  obs.date = make_date(2001, 2, 10);
  obs.lonlat = {{12.2, 46.2}, {12.4, 46.3}};
  obs.elev = {350.0, 420.0};
  obs.tavg = {4.0, 6.0};
  BasinGrid grid;
  grid.points = {{12.3, 46.25}};
  grid.elev = {380.0};
  const KrigeResult k1 = krige_day(m, obs, grid);
  const KrigeResult k2 = krige_day(back, obs, grid);
  CHECK(k1.values(0) == k2.values(0));
}

}  // TEST_SUITE
