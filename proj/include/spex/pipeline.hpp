#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spex/covariate.hpp"
#include "spex/data.hpp"
#include "spex/extent.hpp"
#include "spex/marginal.hpp"
#include "spex/parallel.hpp"
#include "spex/rpareto.hpp"

namespace spex {

struct ScenarioMemberConfig {
  std::string gcm;
  std::string stations;      // pseudo-station metadata CSV
  std::string observations;  // daily series CSV, same schema as observations
};

struct ScenarioConfig {
  std::string scenario;
  std::vector<ScenarioMemberConfig> members;
};

/// Everything one run needs, loadable from a single JSON document. Input
/// paths are resolved relative to the process working directory; artifacts
/// land under output_dir, one subdirectory per stage.
struct PipelineConfig {
  std::string basin = "Basin";
  std::uint64_t seed = 1;
  int threads = 1;

  std::string stations_path;
  std::string observations_path;
  std::string basin_polygon_path;  // empty: padded bounding box of stations
  std::string output_dir = "out";

  // Present when the run generates its own inputs instead of reading files.
  std::optional<SyntheticConfig> synthetic;

  std::vector<Season> seasons = {Season::Winter, Season::Spring,
                                 Season::Summer, Season::Fall};

  int window_days = 30;
  double grid_resolution_deg = 0.4622;
  DebiasWindows debias;

  MarginalOptions marginal;

  std::vector<double> thetas = {1.0};
  double event_quantile = 0.8;
  int min_obs = 5;
  int bootstrap = 300;

  std::vector<ScenarioConfig> scenarios;

  ExtentOptions extent;

  bool figure4_enabled = true;
  int figure4_grid_n = 50;
  double figure4_spacing_km = 2.0;
  int sim_events = 120;
  int sim_sites = 12;

  void validate() const;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);

/// Rows of `field` whose date falls in `season`; site table unchanged.
ParetoField season_subset(const ParetoField& field, Season season);

struct StageResult {
  std::string name;
  bool skipped = false;   // manifest hash matched; nothing recomputed
  double seconds = 0.0;
};

/// Sequential stage runner over one output directory. Each stage loads its
/// inputs from upstream artifacts, writes its own artifacts plus a manifest
/// entry, and is skipped when its inputs and configuration are unchanged.
/// A lock file guards the output directory for the lifetime of this object.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  static const std::vector<std::string>& stage_names();

  /// Runs one stage by name; throws MissingArtifactError when upstream
  /// artifacts are absent, ConfigError for unknown names.
  StageResult run_stage(const std::string& name);

  /// All stages in order.
  std::vector<StageResult> run_all();

  const PipelineConfig& config() const { return cfg_; }

 private:
  struct StageSpec;
  std::string artifact(const std::string& rel) const;
  std::uint64_t derive_seed(const std::string& label) const;
  void require_inputs(const std::vector<std::string>& rel_paths) const;
  std::string stage_key(const StageSpec& spec) const;
  bool stage_current(const StageSpec& spec, const std::string& key) const;
  void record_stage(const StageSpec& spec, const std::string& key,
                    double seconds);

  std::vector<std::string> run_ingest();
  std::vector<std::string> run_covariate();
  std::vector<std::string> run_marginal();
  std::vector<std::string> run_depfit();
  std::vector<std::string> run_project();
  std::vector<std::string> run_simulate();
  std::vector<std::string> run_report();

  PipelineConfig cfg_;
  Exec exec_ = Exec::Serial;
  nlohmann::json manifest_;
  std::string lock_path_;
};

/// Command-line front end: `--config PATH [--stage NAME] [--seed N]
/// [--threads N]`. Returns the process exit code: 0 ok, 2 configuration or
/// data error, 3 missing upstream artifact, 4 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace spex
