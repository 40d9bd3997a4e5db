// Times the gradient-score kernel in serial and OpenMP execution on one
// synthetic event set and reports the speedup. The two runs must agree
// bitwise; the benchmark aborts if they do not.
#include <chrono>
#include <cstdio>
#include <vector>

#include "CLI11.hpp"
#include "spex/parallel.hpp"
#include "spex/rpareto.hpp"
#include "spex/simulate.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

double time_eval(const spex::PreparedEventSet& pes,
                 const std::vector<spex::Semivariogram>& probes, int reps,
                 spex::Exec exec, double* checksum) {
  using clock = std::chrono::steady_clock;
  double acc = 0.0;
  const auto t0 = clock::now();
  for (int r = 0; r < reps; ++r) {
    for (const spex::Semivariogram& sv : probes) {
      acc += spex::mean_score(pes, sv, exec);
    }
  }
  const double seconds = std::chrono::duration<double>(clock::now() - t0).count();
  *checksum = acc;
  return seconds;
}

}  // namespace

int main(int argc, char** argv) {
  int n_sites = 20;
  int n_events = 400;
  int reps = 20;
  std::uint64_t seed = 1;
  CLI::App app{"gradient-score kernel benchmark"};
  app.add_option("--sites", n_sites, "sites per event");
  app.add_option("--events", n_events, "number of events");
  app.add_option("--reps", reps, "evaluation sweeps per timing");
  app.add_option("--seed", seed, "event generator seed");
  CLI11_PARSE(app, argc, argv);

  spex::Semivariogram truth;
  truth.nu = 1.0;
  truth.lambda0 = 2.5;
  truth.lambda1 = -0.2;
  std::vector<double> temps;
  for (int i = 0; i < 500; ++i) temps.push_back(-1.5 + 3.0 * i / 499.0);

  std::printf("generating %d events over %d sites...\n", n_events, n_sites);
  const spex::EventSet es =
      spex::simulate_eventset(truth, temps, n_sites, n_events, 1.0, seed);
  const spex::PreparedEventSet pes = spex::prepare_events(es);

  const std::vector<spex::Semivariogram> probes = {
      {0.5, 2.0, -0.1}, {1.0, 2.5, -0.2}, {1.5, 3.0, 0.1}};

  double sum_serial = 0.0, sum_parallel = 0.0;
  const double t_serial =
      time_eval(pes, probes, reps, spex::Exec::Serial, &sum_serial);
  const double t_parallel =
      time_eval(pes, probes, reps, spex::Exec::Parallel, &sum_parallel);

  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  const int evals = reps * static_cast<int>(probes.size());
  std::printf("threads            %d\n", threads);
  std::printf("score evaluations  %d\n", evals);
  std::printf("serial             %.3f s  (%.2f ms/eval)\n", t_serial,
              1e3 * t_serial / evals);
  std::printf("parallel           %.3f s  (%.2f ms/eval)\n", t_parallel,
              1e3 * t_parallel / evals);
  std::printf("speedup            %.2fx\n", t_serial / t_parallel);

  if (sum_serial != sum_parallel) {
    std::fprintf(stderr, "FATAL: serial and parallel sums differ\n");
    return 1;
  }
  std::printf("bitwise agreement  ok\n");
  return 0;
}
