#include "spex/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include "spex/csv.hpp"
#include "spex/errors.hpp"
#include "spex/rng.hpp"
#include "spex/simulate.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;

namespace spex {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string hash_file(const std::string& path) {
  return hex64(fnv1a64(read_text_file(path)));
}

std::vector<std::string> season_names(const std::vector<Season>& seasons) {
  std::vector<std::string> out;
  for (Season s : seasons) out.push_back(season_name(s));
  return out;
}

/// Matrix export with one labeled row per matrix row; NaN cells are empty.
std::string matrix_csv(const std::string& label_col,
                       const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_names,
                       const Eigen::MatrixXd& m) {
  std::string out = label_col;
  for (const std::string& c : col_names) {
    out += ',';
    out += csv_escape(c);
  }
  out += '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out += row_labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out += ',';
      if (!std::isnan(m(r, c))) out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string daily_series_csv(const DailySeries& s) {
  std::string out = "date,value\n";
  for (std::size_t i = 0; i < s.dates.size(); ++i) {
    out += format_date(s.dates[i]);
    out += ',';
    if (!std::isnan(s.values[i])) out += format_double(s.values[i]);
    out += '\n';
  }
  return out;
}

DailySeries daily_series_from_csv(const CsvTable& t) {
  DailySeries s;
  const std::size_t cd = t.col("date"), cv = t.col("value");
  for (const auto& row : t.rows) {
    s.dates.push_back(parse_date(row[cd]));
    s.values.push_back(row[cv].empty() ? kNaN : parse_double(row[cv]));
  }
  s.validate();
  return s;
}

/// Rows within the covariate's date span. The trailing window mean leaves the
/// first days of the training period without a covariate value, and the
/// marginal model is defined only where the covariate is.
ObservationTable trim_to_covariate(const ObservationTable& obs,
                                   const CovariateSeries& cov) {
  if (cov.dates.empty()) throw DataError("covariate series is empty");
  const Date lo = cov.dates.front(), hi = cov.dates.back();
  ObservationTable out;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs.date[i] < lo || obs.date[i] > hi) continue;
    out.push(obs.station[i], obs.date[i], obs.prcp[i], obs.tavg[i]);
  }
  return out;
}

std::vector<LonLat> polygon_from_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t clon = t.col("lon"), clat = t.col("lat");
  std::vector<LonLat> poly;
  for (const auto& row : t.rows) {
    poly.push_back({parse_double(row[clon]), parse_double(row[clat])});
  }
  return poly;
}

/// Axis-aligned box around the stations, padded so grid cells at the chosen
/// resolution fall inside even for tight layouts.
std::vector<LonLat> station_box(const StationSet& st, double resolution_deg) {
  double lon_lo = 1e300, lon_hi = -1e300, lat_lo = 1e300, lat_hi = -1e300;
  for (const Station& s : st.stations) {
    lon_lo = std::min(lon_lo, s.lon);
    lon_hi = std::max(lon_hi, s.lon);
    lat_lo = std::min(lat_lo, s.lat);
    lat_hi = std::max(lat_hi, s.lat);
  }
  const double pad = std::max(resolution_deg, 0.1);
  lon_lo -= pad;
  lon_hi += pad;
  lat_lo -= pad;
  lat_hi += pad;
  return {{lon_lo, lat_lo}, {lon_hi, lat_lo}, {lon_hi, lat_hi}, {lon_lo, lat_hi}};
}

nlohmann::json marginal_options_json(const MarginalOptions& m) {
  nlohmann::json j;
  j["floor_mm"] = m.floor_mm;
  j["bulk_quantile"] = m.bulk_quantile;
  j["min_exceedances"] = m.min_exceedances;
  j["smoothing"] = m.smoothing.fixed;
  return j;
}

MarginalOptions marginal_options_from_json(const nlohmann::json& j) {
  MarginalOptions m;
  m.floor_mm = j.value("floor_mm", m.floor_mm);
  m.bulk_quantile = j.value("bulk_quantile", m.bulk_quantile);
  m.min_exceedances = j.value("min_exceedances", m.min_exceedances);
  if (j.contains("smoothing")) {
    m.smoothing.fixed = j.at("smoothing").get<std::vector<double>>();
  }
  return m;
}

}  // namespace

void PipelineConfig::validate() const {
  if (basin.empty()) throw ConfigError("basin name must not be empty");
  if (!synthetic && (stations_path.empty() || observations_path.empty())) {
    throw ConfigError(
        "either a synthetic section or stations/observations paths required");
  }
  if (synthetic) synthetic->validate();
  if (seasons.empty()) throw ConfigError("season list must not be empty");
  if (window_days < 1) throw ConfigError("window_days must be >= 1");
  if (!(grid_resolution_deg > 0.0)) {
    throw ConfigError("grid resolution must be positive");
  }
  if (!(marginal.bulk_quantile > 0.0 && marginal.bulk_quantile < 1.0)) {
    throw ConfigError("bulk quantile must lie in (0, 1)");
  }
  if (thetas.empty()) throw ConfigError("theta list must not be empty");
  for (double t : thetas) {
    if (!(t > 0.0)) throw ConfigError("theta values must be positive");
  }
  if (!(event_quantile > 0.0 && event_quantile < 1.0)) {
    throw ConfigError("event quantile must lie in (0, 1)");
  }
  if (min_obs < 2) throw ConfigError("min_obs must be >= 2");
  if (bootstrap < 0) throw ConfigError("bootstrap replicate count must be >= 0");
  if (!(extent.cutoff > 0.0 && extent.cutoff < 1.0)) {
    throw ConfigError("extent cutoff must lie in (0, 1)");
  }
  if (extent.smooth_years < 1) throw ConfigError("smooth_years must be >= 1");
  if (figure4_grid_n < 2) throw ConfigError("figure grid must be >= 2");
  if (!(figure4_spacing_km > 0.0)) {
    throw ConfigError("figure grid spacing must be positive");
  }
  if (sim_events < 1) throw ConfigError("simulated event count must be >= 1");
  if (sim_sites < 2) throw ConfigError("simulated site count must be >= 2");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  for (const ScenarioConfig& sc : scenarios) {
    if (sc.scenario.empty()) throw ConfigError("scenario label must not be empty");
    for (const ScenarioMemberConfig& m : sc.members) {
      if (m.gcm.empty() || m.stations.empty() || m.observations.empty()) {
        throw ConfigError("scenario member needs gcm, stations, observations");
      }
    }
  }
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["basin"] = cfg.basin;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["paths"] = {{"stations", cfg.stations_path},
                {"observations", cfg.observations_path},
                {"basin_polygon", cfg.basin_polygon_path},
                {"output_dir", cfg.output_dir}};
  if (cfg.synthetic) {
    const SyntheticConfig& s = *cfg.synthetic;
    j["synthetic"] = {{"n_stations", s.n_stations},
                      {"first_day", format_date(s.first_day)},
                      {"last_day", format_date(s.last_day)},
                      {"missing_fraction", s.missing_fraction},
                      {"wet_probability", s.wet_probability},
                      {"heavy_given_wet", s.heavy_given_wet},
                      {"gamma_shape", s.gamma_shape},
                      {"gp_xi", s.gp_xi}};
  }
  j["seasons"] = season_names(cfg.seasons);
  j["covariate"] = {{"window_days", cfg.window_days},
                    {"grid_resolution_deg", cfg.grid_resolution_deg},
                    {"debias",
                     {{"gcm_from", cfg.debias.gcm_from},
                      {"gcm_to", cfg.debias.gcm_to},
                      {"obs_from", cfg.debias.obs_from},
                      {"obs_to", cfg.debias.obs_to}}}};
  j["marginal"] = marginal_options_json(cfg.marginal);
  j["dependence"] = {{"theta", cfg.thetas},
                     {"event_quantile", cfg.event_quantile},
                     {"min_obs", cfg.min_obs},
                     {"bootstrap", cfg.bootstrap}};
  nlohmann::json sc_arr = nlohmann::json::array();
  for (const ScenarioConfig& sc : cfg.scenarios) {
    nlohmann::json mem_arr = nlohmann::json::array();
    for (const ScenarioMemberConfig& m : sc.members) {
      mem_arr.push_back({{"gcm", m.gcm},
                         {"stations", m.stations},
                         {"observations", m.observations}});
    }
    sc_arr.push_back({{"scenario", sc.scenario}, {"members", mem_arr}});
  }
  j["scenarios"] = sc_arr;
  j["extent"] = {{"cutoff", cfg.extent.cutoff},
                 {"smooth_years", cfg.extent.smooth_years},
                 {"baseline", {cfg.extent.baseline_from, cfg.extent.baseline_to}},
                 {"future", {cfg.extent.future_from, cfg.extent.future_to}}};
  j["simulate"] = {{"figure4", cfg.figure4_enabled},
                   {"grid_n", cfg.figure4_grid_n},
                   {"spacing_km", cfg.figure4_spacing_km},
                   {"events", cfg.sim_events},
                   {"sites", cfg.sim_sites}};
  return j;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  cfg.basin = j.value("basin", cfg.basin);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  if (j.contains("paths")) {
    const nlohmann::json& p = j.at("paths");
    cfg.stations_path = p.value("stations", std::string());
    cfg.observations_path = p.value("observations", std::string());
    cfg.basin_polygon_path = p.value("basin_polygon", std::string());
    cfg.output_dir = p.value("output_dir", cfg.output_dir);
  }
  if (j.contains("synthetic")) {
    const nlohmann::json& s = j.at("synthetic");
    SyntheticConfig sc;
    sc.n_stations = s.value("n_stations", sc.n_stations);
    if (s.contains("first_day")) sc.first_day = parse_date(s.at("first_day"));
    if (s.contains("last_day")) sc.last_day = parse_date(s.at("last_day"));
    sc.missing_fraction = s.value("missing_fraction", sc.missing_fraction);
    sc.wet_probability = s.value("wet_probability", sc.wet_probability);
    sc.heavy_given_wet = s.value("heavy_given_wet", sc.heavy_given_wet);
    sc.gamma_shape = s.value("gamma_shape", sc.gamma_shape);
    sc.gp_xi = s.value("gp_xi", sc.gp_xi);
    cfg.synthetic = sc;
  }
  if (j.contains("seasons")) {
    cfg.seasons.clear();
    for (const auto& name : j.at("seasons")) {
      cfg.seasons.push_back(parse_season(name.get<std::string>()));
    }
  }
  if (j.contains("covariate")) {
    const nlohmann::json& c = j.at("covariate");
    cfg.window_days = c.value("window_days", cfg.window_days);
    cfg.grid_resolution_deg =
        c.value("grid_resolution_deg", cfg.grid_resolution_deg);
    if (c.contains("debias")) {
      const nlohmann::json& d = c.at("debias");
      cfg.debias.gcm_from = d.value("gcm_from", cfg.debias.gcm_from);
      cfg.debias.gcm_to = d.value("gcm_to", cfg.debias.gcm_to);
      cfg.debias.obs_from = d.value("obs_from", cfg.debias.obs_from);
      cfg.debias.obs_to = d.value("obs_to", cfg.debias.obs_to);
    }
  }
  if (j.contains("marginal")) {
    cfg.marginal = marginal_options_from_json(j.at("marginal"));
  }
  if (j.contains("dependence")) {
    const nlohmann::json& d = j.at("dependence");
    if (d.contains("theta")) cfg.thetas = d.at("theta").get<std::vector<double>>();
    cfg.event_quantile = d.value("event_quantile", cfg.event_quantile);
    cfg.min_obs = d.value("min_obs", cfg.min_obs);
    cfg.bootstrap = d.value("bootstrap", cfg.bootstrap);
  }
  if (j.contains("scenarios")) {
    for (const auto& sj : j.at("scenarios")) {
      ScenarioConfig sc;
      sc.scenario = sj.at("scenario").get<std::string>();
      for (const auto& mj : sj.at("members")) {
        sc.members.push_back({mj.at("gcm").get<std::string>(),
                              mj.at("stations").get<std::string>(),
                              mj.at("observations").get<std::string>()});
      }
      cfg.scenarios.push_back(std::move(sc));
    }
  }
  if (j.contains("extent")) {
    const nlohmann::json& e = j.at("extent");
    cfg.extent.cutoff = e.value("cutoff", cfg.extent.cutoff);
    cfg.extent.smooth_years = e.value("smooth_years", cfg.extent.smooth_years);
    if (e.contains("baseline")) {
      cfg.extent.baseline_from = e.at("baseline").at(0).get<int>();
      cfg.extent.baseline_to = e.at("baseline").at(1).get<int>();
    }
    if (e.contains("future")) {
      cfg.extent.future_from = e.at("future").at(0).get<int>();
      cfg.extent.future_to = e.at("future").at(1).get<int>();
    }
  }
  if (j.contains("simulate")) {
    const nlohmann::json& s = j.at("simulate");
    cfg.figure4_enabled = s.value("figure4", cfg.figure4_enabled);
    cfg.figure4_grid_n = s.value("grid_n", cfg.figure4_grid_n);
    cfg.figure4_spacing_km = s.value("spacing_km", cfg.figure4_spacing_km);
    cfg.sim_events = s.value("events", cfg.sim_events);
    cfg.sim_sites = s.value("sites", cfg.sim_sites);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  if (!fs::exists(path)) {
    throw ConfigError("config file does not exist: " + path);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("unparseable config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

ParetoField season_subset(const ParetoField& field, Season season) {
  ParetoField out;
  out.site_xy = field.site_xy;
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < field.dates.size(); ++i) {
    if (season_of(field.dates[i]) == season) {
      out.dates.push_back(field.dates[i]);
      out.temp.push_back(field.temp[i]);
      keep.push_back(static_cast<Eigen::Index>(i));
    }
  }
  out.values.resize(static_cast<Eigen::Index>(keep.size()), field.values.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) = field.values.row(keep[r]);
  }
  return out;
}

struct Pipeline::StageSpec {
  std::string name;
  std::vector<std::string> deps;       // upstream artifacts (relative paths)
  std::vector<std::string> externals;  // config-referenced input files
  nlohmann::json slice;                // config subset this stage consumes
  std::vector<std::string> (Pipeline::*run)() = nullptr;
};

const std::vector<std::string>& Pipeline::stage_names() {
  static const std::vector<std::string> names{
      "ingest", "covariate", "marginal", "depfit",
      "project", "simulate", "report"};
  return names;
}

namespace {

std::string fit_rel(Season season, double theta) {
  return "depfit/fit_" + season_name(season) + "_theta" + format_double(theta) +
         ".json";
}

std::string events_rel(Season season, double theta) {
  return "depfit/events_" + season_name(season) + "_theta" +
         format_double(theta) + ".csv";
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  exec_ = cfg_.threads > 1 ? Exec::Parallel : Exec::Serial;
#ifdef _OPENMP
  omp_set_num_threads(cfg_.threads);
#endif
  fs::create_directories(cfg_.output_dir);
  lock_path_ = (fs::path(cfg_.output_dir) / "lock").string();
  std::FILE* f = std::fopen(lock_path_.c_str(), "wx");
  if (f == nullptr) {
    throw ConfigError("output directory is busy (lock file exists): " +
                      lock_path_);
  }
  std::fputs("running\n", f);
  std::fclose(f);

  const std::string manifest_path =
      (fs::path(cfg_.output_dir) / "manifest.json").string();
  if (fs::exists(manifest_path)) {
    try {
      manifest_ = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
      std::remove(lock_path_.c_str());
      throw ConfigError("unreadable run manifest " + manifest_path + ": " +
                        e.what());
    }
  }
}

Pipeline::~Pipeline() { std::remove(lock_path_.c_str()); }

std::string Pipeline::artifact(const std::string& rel) const {
  return (fs::path(cfg_.output_dir) / rel).string();
}

std::uint64_t Pipeline::derive_seed(const std::string& label) const {
  return CounterRng(cfg_.seed).substream(fnv1a64(label)).seed();
}

void Pipeline::require_inputs(const std::vector<std::string>& rel_paths) const {
  for (const std::string& rel : rel_paths) {
    if (!fs::exists(artifact(rel))) {
      throw MissingArtifactError("missing upstream artifact " + artifact(rel) +
                                 "; run earlier stages first");
    }
  }
}

std::string Pipeline::stage_key(const StageSpec& spec) const {
  std::string blob = spec.slice.dump();
  blob += "|seed=" + std::to_string(cfg_.seed);
  for (const std::string& rel : spec.deps) {
    blob += "|dep:" + rel + "=" + hash_file(artifact(rel));
  }
  for (const std::string& path : spec.externals) {
    if (!fs::exists(path)) {
      throw ConfigError("configured input file does not exist: " + path);
    }
    blob += "|ext:" + path + "=" + hash_file(path);
  }
  return hex64(fnv1a64(blob));
}

bool Pipeline::stage_current(const StageSpec& spec,
                             const std::string& key) const {
  if (!manifest_.contains("stages")) return false;
  const nlohmann::json& stages = manifest_.at("stages");
  if (!stages.contains(spec.name)) return false;
  const nlohmann::json& entry = stages.at(spec.name);
  if (entry.value("key", std::string()) != key) return false;
  for (const auto& [rel, hash] : entry.at("artifacts").items()) {
    const std::string full = artifact(rel);
    if (!fs::exists(full) || hash_file(full) != hash.get<std::string>()) {
      return false;
    }
  }
  return true;
}

void Pipeline::record_stage(const StageSpec& spec, const std::string& key,
                            double seconds) {
  // The manifest carries only reproducible content; wall-clock timings go to
  // a separate file that is not part of the byte-compared artifact set.
  PipelineConfig semantic = cfg_;
  semantic.output_dir.clear();
  semantic.threads = 1;
  manifest_["config_hash"] = hex64(fnv1a64(config_to_json(semantic).dump()));
  manifest_["seed"] = cfg_.seed;
  manifest_["timings_file"] = "timings.json";
  manifest_["stages"][spec.name]["key"] = key;
  write_text_file(artifact("manifest.json"), manifest_.dump(2) + "\n");

  const std::string timings_path = artifact("timings.json");
  nlohmann::json timings;
  if (fs::exists(timings_path)) {
    try {
      timings = nlohmann::json::parse(read_text_file(timings_path));
    } catch (const nlohmann::json::parse_error&) {
      timings = nlohmann::json::object();
    }
  }
  timings[spec.name] = seconds;
  write_text_file(timings_path, timings.dump(2) + "\n");
}

StageResult Pipeline::run_stage(const std::string& name) {
  StageSpec spec;
  spec.name = name;
  if (name == "ingest") {
    spec.run = &Pipeline::run_ingest;
    spec.slice["paths"] = {{"stations", cfg_.stations_path},
                           {"observations", cfg_.observations_path}};
    if (cfg_.synthetic) spec.slice["synthetic"] = config_to_json(cfg_)["synthetic"];
    if (!cfg_.synthetic) {
      spec.externals = {cfg_.stations_path, cfg_.observations_path};
    }
  } else if (name == "covariate") {
    spec.run = &Pipeline::run_covariate;
    spec.deps = {"ingest/stations.csv", "ingest/observations.csv"};
    spec.slice["covariate"] = config_to_json(cfg_)["covariate"];
    spec.slice["basin_polygon"] = cfg_.basin_polygon_path;
    if (!cfg_.basin_polygon_path.empty()) {
      spec.externals = {cfg_.basin_polygon_path};
    }
  } else if (name == "marginal") {
    spec.run = &Pipeline::run_marginal;
    spec.deps = {"ingest/stations.csv", "ingest/observations.csv",
                 "covariate/covariate.csv", "covariate/covariate.json"};
    spec.slice["marginal"] = marginal_options_json(cfg_.marginal);
  } else if (name == "depfit") {
    spec.run = &Pipeline::run_depfit;
    spec.deps = {"ingest/stations.csv", "ingest/observations.csv",
                 "covariate/covariate.csv", "covariate/covariate.json",
                 "marginal/marginal.json"};
    spec.slice["dependence"] = config_to_json(cfg_)["dependence"];
    spec.slice["seasons"] = season_names(cfg_.seasons);
  } else if (name == "project") {
    spec.run = &Pipeline::run_project;
    spec.deps = {"covariate/covariate.csv", "covariate/covariate.json",
                 "covariate/basin_window.csv", "covariate/grid.csv",
                 "covariate/grid.json"};
    for (Season s : cfg_.seasons) {
      for (double t : cfg_.thetas) spec.deps.push_back(fit_rel(s, t));
    }
    spec.slice["scenarios"] = config_to_json(cfg_)["scenarios"];
    spec.slice["extent"] = config_to_json(cfg_)["extent"];
    spec.slice["covariate"] = config_to_json(cfg_)["covariate"];
    spec.slice["basin"] = cfg_.basin;
    for (const ScenarioConfig& sc : cfg_.scenarios) {
      for (const ScenarioMemberConfig& m : sc.members) {
        spec.externals.push_back(m.stations);
        spec.externals.push_back(m.observations);
      }
    }
  } else if (name == "simulate") {
    spec.run = &Pipeline::run_simulate;
    spec.deps = {"covariate/covariate.csv", "covariate/covariate.json",
                 fit_rel(cfg_.seasons.front(), cfg_.thetas.front())};
    spec.slice["simulate"] = config_to_json(cfg_)["simulate"];
  } else if (name == "report") {
    spec.run = &Pipeline::run_report;
    for (Season s : cfg_.seasons) {
      for (double t : cfg_.thetas) {
        spec.deps.push_back(fit_rel(s, t));
        spec.deps.push_back(events_rel(s, t));
      }
    }
    spec.deps.push_back("project/extent.csv");
    spec.slice["basin"] = cfg_.basin;
    spec.slice["seasons"] = season_names(cfg_.seasons);
    spec.slice["theta"] = cfg_.thetas;
  } else {
    throw ConfigError("unknown stage: " + name);
  }

  require_inputs(spec.deps);
  const std::string key = stage_key(spec);
  if (stage_current(spec, key)) {
    return {name, true, 0.0};
  }

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> produced = (this->*spec.run)();
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  nlohmann::json arts = nlohmann::json::object();
  for (const std::string& rel : produced) arts[rel] = hash_file(artifact(rel));
  manifest_["stages"][spec.name] = {{"key", key}, {"artifacts", arts}};
  record_stage(spec, key, seconds);
  return {name, false, seconds};
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> results;
  for (const std::string& name : stage_names()) {
    results.push_back(run_stage(name));
  }
  return results;
}

std::vector<std::string> Pipeline::run_ingest() {
  fs::create_directories(artifact("ingest"));
  StationSet st;
  ObservationTable obs;
  if (cfg_.synthetic) {
    SyntheticConfig sc = *cfg_.synthetic;
    sc.seed = derive_seed("ingest/synthetic");
    SyntheticData d = generate_synthetic(sc);
    st = std::move(d.stations);
    obs = std::move(d.table);
  } else {
    st = load_stations(cfg_.stations_path);
    obs = load_observations(cfg_.observations_path, st);
  }
  save_stations(st, artifact("ingest/stations.csv"));
  save_observations(obs, st, artifact("ingest/observations.csv"));

  std::vector<std::string> ids;
  for (const Station& s : st.stations) ids.push_back(s.id);

  const Eigen::MatrixXd daily = daily_mean_over_years(obs, st.size());
  std::vector<std::string> day_labels;
  for (int d = 1; d <= 366; ++d) day_labels.push_back(std::to_string(d));
  write_text_file(artifact("ingest/daily_means.csv"),
                  matrix_csv("day", day_labels, ids, daily));

  const AnnualMeans annual = annual_mean(obs, st.size());
  std::vector<std::string> year_labels;
  for (int y : annual.years) year_labels.push_back(std::to_string(y));
  write_text_file(artifact("ingest/annual_means.csv"),
                  matrix_csv("year", year_labels, ids, annual.m));

  return {"ingest/stations.csv", "ingest/observations.csv",
          "ingest/daily_means.csv", "ingest/annual_means.csv"};
}

std::vector<std::string> Pipeline::run_covariate() {
  fs::create_directories(artifact("covariate"));
  const StationSet st = load_stations(artifact("ingest/stations.csv"));
  const ObservationTable obs =
      load_observations(artifact("ingest/observations.csv"), st);

  const std::vector<LonLat> polygon =
      cfg_.basin_polygon_path.empty()
          ? station_box(st, cfg_.grid_resolution_deg)
          : polygon_from_csv(cfg_.basin_polygon_path);
  const BasinGrid grid =
      make_basin_grid(polygon, st, cfg_.grid_resolution_deg);
  {
    std::string out = "lon,lat,elev\n";
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
      out += format_double(grid.points[i].lon);
      out += ',';
      out += format_double(grid.points[i].lat);
      out += ',';
      out += format_double(grid.elev[i]);
      out += '\n';
    }
    write_text_file(artifact("covariate/grid.csv"), out);
    nlohmann::json gj;
    gj["resolution_deg"] = grid.resolution_deg;
    write_text_file(artifact("covariate/grid.json"), gj.dump(2) + "\n");
  }

  const KrigingModel model = fit_kriging_model(obs, st, true);
  write_text_file(artifact("covariate/kriging.json"),
                  kriging_model_to_json(model).dump(2) + "\n");

  const DailySeries daily = daily_basin_series(model, obs, st, grid);
  const DailySeries windowed = window_mean(daily, cfg_.window_days);
  write_text_file(artifact("covariate/basin_window.csv"),
                  daily_series_csv(windowed));

  const CovariateSeries cov = standardize_training(windowed, cfg_.window_days);
  save_covariate(cov, artifact("covariate/covariate.csv"),
                 artifact("covariate/covariate.json"));

  return {"covariate/grid.csv",       "covariate/grid.json",
          "covariate/kriging.json",   "covariate/basin_window.csv",
          "covariate/covariate.csv",  "covariate/covariate.json"};
}

std::vector<std::string> Pipeline::run_marginal() {
  fs::create_directories(artifact("marginal"));
  const StationSet st = load_stations(artifact("ingest/stations.csv"));
  const ObservationTable obs_all =
      load_observations(artifact("ingest/observations.csv"), st);
  const CovariateSeries cov = load_covariate(
      artifact("covariate/covariate.csv"), artifact("covariate/covariate.json"));
  const ObservationTable obs = trim_to_covariate(obs_all, cov);

  const MarginalModel model = fit_marginal(obs, st, cov, cfg_.marginal);
  save_marginal(model, artifact("marginal/marginal.json"));
  qq_export(model, obs, st, cov, artifact("marginal/qq.csv"));

  const ParetoField field = to_unit_pareto(model, obs, st, cov);
  std::string out = "station,date,value\n";
  for (Eigen::Index r = 0; r < field.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < field.values.cols(); ++c) {
      const double v = field.values(r, c);
      if (std::isnan(v)) continue;
      out += csv_escape(st[static_cast<std::size_t>(c)].id);
      out += ',';
      out += format_date(field.dates[static_cast<std::size_t>(r)]);
      out += ',';
      out += format_double(v);
      out += '\n';
    }
  }
  write_text_file(artifact("marginal/pareto.csv"), out);

  return {"marginal/marginal.json", "marginal/qq.csv", "marginal/pareto.csv"};
}

std::vector<std::string> Pipeline::run_depfit() {
  fs::create_directories(artifact("depfit"));
  const StationSet st = load_stations(artifact("ingest/stations.csv"));
  const ObservationTable obs_all =
      load_observations(artifact("ingest/observations.csv"), st);
  const CovariateSeries cov = load_covariate(
      artifact("covariate/covariate.csv"), artifact("covariate/covariate.json"));
  const ObservationTable obs = trim_to_covariate(obs_all, cov);
  const MarginalModel model = load_marginal(artifact("marginal/marginal.json"));

  const ParetoField field = to_unit_pareto(model, obs, st, cov);

  std::vector<std::string> produced;
  FitOptions opts;
  opts.exec = exec_;
  for (Season season : cfg_.seasons) {
    const ParetoField sub = season_subset(field, season);
    for (double theta : cfg_.thetas) {
      const EventSet es =
          extract_events(sub, theta, cfg_.event_quantile, cfg_.min_obs);
      const std::string label =
          "depfit/" + season_name(season) + "/theta=" + format_double(theta);
      const DependenceFit fit =
          cfg_.bootstrap > 0
              ? bootstrap_fit(es, cfg_.bootstrap, derive_seed(label), opts)
              : fit_gradient_score(es, opts);
      write_events_csv(es, artifact(events_rel(season, theta)));
      write_text_file(artifact(fit_rel(season, theta)),
                      dependence_fit_to_json(fit).dump(2) + "\n");
      produced.push_back(events_rel(season, theta));
      produced.push_back(fit_rel(season, theta));
    }
  }
  return produced;
}

std::vector<std::string> Pipeline::run_project() {
  fs::create_directories(artifact("project"));
  const CovariateSeries cov = load_covariate(
      artifact("covariate/covariate.csv"), artifact("covariate/covariate.json"));
  const DailySeries obs_windowed =
      daily_series_from_csv(read_csv(artifact("covariate/basin_window.csv")));
  BasinGrid grid;
  {
    const CsvTable t = read_csv(artifact("covariate/grid.csv"));
    const std::size_t clon = t.col("lon"), clat = t.col("lat"),
                      cel = t.col("elev");
    for (const auto& row : t.rows) {
      grid.points.push_back({parse_double(row[clon]), parse_double(row[clat])});
      grid.elev.push_back(parse_double(row[cel]));
    }
    const nlohmann::json gj =
        nlohmann::json::parse(read_text_file(artifact("covariate/grid.json")));
    grid.resolution_deg = gj.at("resolution_deg").get<double>();
    grid.validate();
  }

  std::vector<std::string> produced;
  std::vector<ScenarioSet> sets;
  nlohmann::json offsets = nlohmann::json::array();
  for (const ScenarioConfig& sc : cfg_.scenarios) {
    ScenarioSet set;
    set.scenario = sc.scenario;
    for (const ScenarioMemberConfig& mem : sc.members) {
      const StationSet gst = load_stations(mem.stations);
      const ObservationTable gobs = load_observations(mem.observations, gst);
      // Same interpolation scheme as the training covariate, minus the
      // long-term year smooth: model output already carries its own trend.
      const KrigingModel gmodel = fit_kriging_model(gobs, gst, false);
      const DailySeries gdaily = daily_basin_series(gmodel, gobs, gst, grid);
      const DailySeries gwin = window_mean(gdaily, cfg_.window_days);
      ScenarioSeries ss = debias_gcm(gwin, obs_windowed, cfg_.debias);
      ss.gcm = mem.gcm;
      ss.scenario = sc.scenario;
      const CovariateSeries mcov =
          standardize_with(ss.daily, cov.mean, cov.sd, cfg_.window_days);
      const std::string base = "project/cov_" + sc.scenario + "_" + mem.gcm;
      save_covariate(mcov, artifact(base + ".csv"), artifact(base + ".json"));
      produced.push_back(base + ".csv");
      produced.push_back(base + ".json");
      offsets.push_back({{"scenario", sc.scenario},
                         {"gcm", mem.gcm},
                         {"offsets", ss.offset}});
      set.members.push_back({mem.gcm, mcov});
    }
    sets.push_back(std::move(set));
  }
  write_text_file(artifact("project/offsets.json"),
                  nlohmann::json{{"members", offsets}}.dump(2) + "\n");
  produced.push_back("project/offsets.json");

  std::vector<ExtentInput> inputs;
  for (Season season : cfg_.seasons) {
    for (double theta : cfg_.thetas) {
      const DependenceFit fit = dependence_fit_from_json(
          nlohmann::json::parse(read_text_file(artifact(fit_rel(season, theta)))));
      inputs.push_back({cfg_.basin, season, theta, fit, cov});
    }
  }
  const ExtentReport report = scenario_report(inputs, sets, cfg_.extent);
  write_extent_csv(report, artifact("project/extent.csv"));
  write_extent_manifest(report, inputs, artifact("project/extent_manifest.json"));
  produced.push_back("project/extent.csv");
  produced.push_back("project/extent_manifest.json");
  return produced;
}

std::vector<std::string> Pipeline::run_simulate() {
  fs::create_directories(artifact("simulate"));
  std::vector<std::string> produced;
  if (cfg_.figure4_enabled) {
    figure4(derive_seed("simulate/figure4"), artifact("simulate"),
            cfg_.figure4_grid_n, cfg_.figure4_spacing_km);
    produced.push_back("simulate/figure4_lambda2.csv");
    produced.push_back("simulate/figure4_lambda5.csv");
    produced.push_back("simulate/figure4_lambda10.csv");
    produced.push_back("simulate/figure4.json");
  }
  const DependenceFit fit = dependence_fit_from_json(nlohmann::json::parse(
      read_text_file(artifact(fit_rel(cfg_.seasons.front(), cfg_.thetas.front())))));
  const CovariateSeries cov = load_covariate(
      artifact("covariate/covariate.csv"), artifact("covariate/covariate.json"));
  std::vector<double> temps;
  for (double v : cov.values) {
    if (std::isfinite(v)) temps.push_back(v);
  }
  const EventSet es = simulate_eventset(
      fit.estimate, temps, cfg_.sim_sites, cfg_.sim_events,
      cfg_.thetas.front(), derive_seed("simulate/events"));
  write_events_csv(es, artifact("simulate/events.csv"));
  produced.push_back("simulate/events.csv");
  return produced;
}

std::vector<std::string> Pipeline::run_report() {
  fs::create_directories(artifact("report"));

  std::vector<FitSummaryRow> rows;
  for (Season season : cfg_.seasons) {
    for (double theta : cfg_.thetas) {
      const DependenceFit fit = dependence_fit_from_json(nlohmann::json::parse(
          read_text_file(artifact(fit_rel(season, theta)))));
      rows.push_back({cfg_.basin, season_name(season), theta, fit});
    }
  }
  write_fit_summary_csv(rows, artifact("report/fit_estimates.csv"));

  // Event counts per season and risk exponent, with the overlap against the
  // first exponent's event days.
  std::string counts = "basin,season,theta,n_events,n_shared_first_theta\n";
  for (Season season : cfg_.seasons) {
    std::set<std::string> first_days;
    for (std::size_t ti = 0; ti < cfg_.thetas.size(); ++ti) {
      const CsvTable t =
          read_csv(artifact(events_rel(season, cfg_.thetas[ti])));
      const std::size_t ce = t.col("event"), cd = t.col("day");
      std::set<std::string> ids, days;
      for (const auto& row : t.rows) {
        ids.insert(row[ce]);
        days.insert(row[cd]);
      }
      if (ti == 0) first_days = days;
      std::size_t shared = 0;
      for (const std::string& d : days) shared += first_days.count(d);
      counts += csv_escape(cfg_.basin) + ',' + season_name(season) + ',' +
                format_double(cfg_.thetas[ti]) + ',' +
                std::to_string(ids.size()) + ',' + std::to_string(shared) +
                '\n';
    }
  }
  write_text_file(artifact("report/event_counts.csv"), counts);

  // Range trajectories on the km scale, one row per projected season-year.
  const CsvTable ext = read_csv(artifact("project/extent.csv"));
  const std::size_t clog = ext.col("log_range_km");
  std::string series = "basin,season,theta,scenario,gcm,year,range_km\n";
  for (const auto& row : ext.rows) {
    for (std::size_t c = 0; c < clog; ++c) {
      series += row[c];
      series += ',';
    }
    series += format_double(std::exp(parse_double(row[clog])));
    series += '\n';
  }
  write_text_file(artifact("report/extent_series.csv"), series);

  return {"report/fit_estimates.csv", "report/event_counts.csv",
          "report/extent_series.csv"};
}

}  // namespace spex
