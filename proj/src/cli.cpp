#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "spex/errors.hpp"
#include "spex/pipeline.hpp"

namespace spex {

namespace {

void print_results(const std::vector<StageResult>& results) {
  for (const StageResult& r : results) {
    if (r.skipped) {
      std::printf("stage %-9s skipped (up to date)\n", r.name.c_str());
    } else {
      std::printf("stage %-9s done in %.2f s\n", r.name.c_str(), r.seconds);
    }
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"spatial precipitation extremes pipeline"};
  std::string config_path;
  std::string stage;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--config", config_path, "pipeline configuration JSON")
      ->required();
  app.add_option("--stage", stage,
                 "run a single stage (default: all, in order)");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  auto* threads_opt =
      app.add_option("--threads", threads, "override the config thread count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    PipelineConfig cfg = load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (threads_opt->count() > 0) cfg.threads = threads;
    Pipeline pipeline(std::move(cfg));
    if (stage.empty()) {
      print_results(pipeline.run_all());
    } else {
      print_results({pipeline.run_stage(stage)});
    }
    return 0;
  } catch (const MissingArtifactError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}

}  // namespace spex
