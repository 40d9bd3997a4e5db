#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spex/geo.hpp"
#include "spex/rng.hpp"
#include "spex/rpareto.hpp"

namespace spex {

struct SiteLayout {
  std::vector<XY> sites;

  // n-by-n grid with spacing km, first site at the origin.
  static SiteLayout grid(int n, double spacing);
  // n sites uniform over [0, extent]^2.
  static SiteLayout scattered(int n, double extent, std::uint64_t seed);

  std::size_t size() const { return sites.size(); }
  void validate() const;  // nonempty, pairwise-distinct coordinates
};

// Gaussian field with stationary increments pinned to zero at the origin:
// Cov(s, s') = g(s) + g(s') - g(s - s') for g(h) = (|h|/range)^nu.  The
// Cholesky factor over the non-origin sites is computed once per layout;
// sites at the origin itself are deterministically zero.
class FbmSampler {
 public:
  FbmSampler(SiteLayout layout, const Semivariogram& sv, double temp);

  const SiteLayout& layout() const { return layout_; }
  double nu() const { return nu_; }
  double range() const { return range_; }

  double gamma(double h) const;
  double gamma_origin(std::size_t i) const { return gamma0_[i]; }
  double gamma_between(std::size_t i, std::size_t j) const;

  // One exact draw; consumes normal(0..n_free-1) from `rng`.
  Eigen::VectorXd sample(const CounterRng& rng) const;

  // W_k(s) = exp(G(s) - G(s_k) - g(s - s_k)); W_k(s_k) = 1 exactly and
  // E[W_k(s)] = 1 for all s.
  Eigen::VectorXd sample_extremal_function(std::size_t k,
                                           const CounterRng& rng) const;

 private:
  SiteLayout layout_;
  double nu_ = 1.0;
  double range_ = 1.0;
  std::vector<std::size_t> free_;  // indices of sites away from the origin
  Eigen::MatrixXd chol_;           // lower factor over free_
  std::vector<double> gamma0_;     // g(s_i)
  bool jittered_ = false;

 public:
  bool jittered() const { return jittered_; }
};

Eigen::VectorXd sample_fbm(const FbmSampler& sampler, std::uint64_t seed);

struct SimDiagnostics {
  std::int64_t proposals = 0;
  std::int64_t accepted = 0;
  std::int64_t violations = 0;
  double bound = 0.0;
};

// Exact simulation above the threshold: propose a site k uniformly, draw the
// extremal function W_k, accept with probability r(W_k)/M, and emit
// Z = u * P * W_k / r(W_k) with an independent Pareto(alpha) radius P.  The
// bound M starts at the max risk over 200 pilot proposals and doubles on
// violation, restarting the event in progress.
struct RParetoSampler {
  double alpha = 1.0;
  RiskFunctional risk;
  FbmSampler fbm;

  RParetoSampler(double alpha_, RiskFunctional risk_, FbmSampler fbm_)
      : alpha(alpha_), risk(risk_), fbm(std::move(fbm_)) {}

  std::vector<Eigen::VectorXd> sample(int n, double u, const CounterRng& root,
                                      SimDiagnostics* diag = nullptr) const;
};

struct Figure4Field {
  double lambda = 0.0;
  double effective_range_km = 0.0;
  std::string csv_path;
  Eigen::MatrixXd values;  // grid_n x grid_n, [row, col] = [iy, ix]
};

struct Figure4Output {
  std::uint64_t seed = 0;
  double alpha = 5.0;
  int grid_n = 50;
  double spacing_km = 2.0;
  std::vector<Figure4Field> fields;  // lambda in {2, 5, 10}
  std::string manifest_path;
};

// Three unit-slope power-variogram fields drawn from the same uniforms,
// written as x,y,value CSV grids plus a JSON manifest.
Figure4Output figure4(std::uint64_t seed, const std::string& out_dir,
                      int grid_n = 50, double spacing_km = 2.0);

// Parameter-recovery harness: per event, a covariate value is drawn from
// `temps`, the field range set to exp(lambda0 + lambda1*temp), and one event
// above u = 1 emitted on a shared scattered layout.
EventSet simulate_eventset(const Semivariogram& sv_true,
                           const std::vector<double>& temps, int n_sites,
                           int n_events, double theta, std::uint64_t seed);

}  // namespace spex
