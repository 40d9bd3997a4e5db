#include "spex/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <utility>

#include "spex/csv.hpp"
#include "spex/errors.hpp"
#include "spex/extent.hpp"

namespace spex {

SiteLayout SiteLayout::grid(int n, double spacing) {
  if (n < 1 || !(spacing > 0.0)) {
    throw ConfigError("grid layout needs n >= 1 and positive spacing");
  }
  SiteLayout out;
  out.sites.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      out.sites.push_back({ix * spacing, iy * spacing});
    }
  }
  return out;
}

SiteLayout SiteLayout::scattered(int n, double extent, std::uint64_t seed) {
  if (n < 1 || !(extent > 0.0)) {
    throw ConfigError("scattered layout needs n >= 1 and positive extent");
  }
  const CounterRng rng(seed);
  SiteLayout out;
  out.sites.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const std::uint64_t i = 2 * static_cast<std::uint64_t>(k);
    out.sites.push_back({extent * rng.uniform(i), extent * rng.uniform(i + 1)});
  }
  out.validate();
  return out;
}

void SiteLayout::validate() const {
  if (sites.empty()) throw ConfigError("site layout is empty");
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (!std::isfinite(sites[i].x) || !std::isfinite(sites[i].y)) {
      throw DataError("site layout has a non-finite coordinate");
    }
    for (std::size_t j = i + 1; j < sites.size(); ++j) {
      if (sites[i].x == sites[j].x && sites[i].y == sites[j].y) {
        throw DataError("site layout has duplicate coordinates");
      }
    }
  }
}

FbmSampler::FbmSampler(SiteLayout layout, const Semivariogram& sv, double temp)
    : layout_(std::move(layout)) {
  layout_.validate();
  sv.validate();
  nu_ = sv.nu;
  range_ = std::exp(sv.log_range(temp));

  const std::size_t n = layout_.size();
  gamma0_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const XY& s = layout_.sites[i];
    const double h = std::hypot(s.x, s.y);
    gamma0_[i] = gamma(h);
    if (h > 0.0) free_.push_back(i);
  }
  const std::size_t m = free_.size();
  if (m == 0) return;  // single site at the origin: deterministic zero field

  Eigen::MatrixXd C(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      const double c = gamma0_[free_[a]] + gamma0_[free_[b]] -
                       gamma_between(free_[a], free_[b]);
      C(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = c;
      C(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = c;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() != Eigen::Success) {
    C.diagonal().array() += 1e-10;
    jittered_ = true;
    llt.compute(C);
    if (llt.info() != Eigen::Success) {
      const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                            C, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .minCoeff();
      throw NumericError(
          "pinned-field covariance is not positive definite even after "
          "jitter (smallest eigenvalue " +
          format_double(lo) + ")");
    }
  }
  chol_ = llt.matrixL();
}

double FbmSampler::gamma(double h) const {
  if (h <= 0.0) return 0.0;
  return std::exp(nu_ * (std::log(h) - std::log(range_)));
}

double FbmSampler::gamma_between(std::size_t i, std::size_t j) const {
  const XY& a = layout_.sites[i];
  const XY& b = layout_.sites[j];
  return gamma(std::hypot(a.x - b.x, a.y - b.y));
}

Eigen::VectorXd FbmSampler::sample(const CounterRng& rng) const {
  const std::size_t m = free_.size();
  Eigen::VectorXd z(static_cast<Eigen::Index>(m));
  for (std::size_t a = 0; a < m; ++a) {
    z(static_cast<Eigen::Index>(a)) = rng.normal(a);
  }
  Eigen::VectorXd field =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.size()));
  const Eigen::VectorXd g = chol_.triangularView<Eigen::Lower>() * z;
  for (std::size_t a = 0; a < m; ++a) {
    field(static_cast<Eigen::Index>(free_[a])) =
        g(static_cast<Eigen::Index>(a));
  }
  return field;
}

Eigen::VectorXd FbmSampler::sample_extremal_function(
    std::size_t k, const CounterRng& rng) const {
  if (k >= layout_.size()) throw ConfigError("extremal-function site index out of range");
  const Eigen::VectorXd g = sample(rng);
  const double gk = g(static_cast<Eigen::Index>(k));
  const XY& sk = layout_.sites[k];
  Eigen::VectorXd w(g.size());
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const XY& si = layout_.sites[i];
    const double gam = gamma(std::hypot(si.x - sk.x, si.y - sk.y));
    w(static_cast<Eigen::Index>(i)) =
        std::exp(g(static_cast<Eigen::Index>(i)) - gk - gam);
  }
  w(static_cast<Eigen::Index>(k)) = 1.0;
  return w;
}

Eigen::VectorXd sample_fbm(const FbmSampler& sampler, std::uint64_t seed) {
  return sampler.sample(CounterRng(seed));
}

std::vector<Eigen::VectorXd> RParetoSampler::sample(int n, double u,
                                                    const CounterRng& root,
                                                    SimDiagnostics* diag) const {
  if (!(alpha > 0.0)) throw ConfigError("tail index must be positive");
  if (!(u > 0.0)) throw ConfigError("threshold must be positive");
  if (n < 0) throw ConfigError("event count must be nonnegative");

  const std::size_t K = fbm.layout().size();
  SimDiagnostics d;

  // Proposal j of stream `rng`: counters 0 = site pick, 1 = acceptance,
  // 2 = radius; the field normals come from a nested substream.
  const auto propose = [&](const CounterRng& rng, Eigen::VectorXd* w,
                           double* r, double* acc_u, double* rad_u) {
    const std::size_t k = std::min<std::size_t>(
        K - 1, static_cast<std::size_t>(rng.uniform(0) *
                                        static_cast<double>(K)));
    *acc_u = rng.uniform(1);
    *rad_u = rng.uniform(2);
    *w = fbm.sample_extremal_function(k, rng.substream(3));
    *r = risk(std::span<const double>(w->data(),
                                      static_cast<std::size_t>(w->size())));
  };

  double M = 0.0;
  {
    const CounterRng pilot = root.substream(0);
    Eigen::VectorXd w;
    double r = 0.0, a = 0.0, p = 0.0;
    for (std::uint64_t j = 0; j < 200; ++j) {
      propose(pilot.substream(j), &w, &r, &a, &p);
      M = std::max(M, r);
    }
  }
  if (!(M > 0.0) || !std::isfinite(M)) {
    throw NumericError("rejection bound pilot produced no positive risk");
  }

  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(n));
  std::uint64_t stream = 1;
  while (out.size() < static_cast<std::size_t>(n)) {
    const CounterRng ev = root.substream(stream);
    Eigen::VectorXd w;
    double r = 0.0, acc_u = 0.0, rad_u = 0.0;
    for (std::uint64_t j = 0;; ++j) {
      propose(ev.substream(j), &w, &r, &acc_u, &rad_u);
      ++d.proposals;
      if (!std::isfinite(r)) {
        throw NumericError("risk functional returned a non-finite value");
      }
      if (r > M) {
        // Bound violated: double it and restart this event on fresh draws.
        M *= 2.0;
        ++d.violations;
        ++stream;
        break;
      }
      if (acc_u * M < r) {
        const double radius = std::pow(rad_u, -1.0 / alpha);
        out.emplace_back(w * (u * radius / r));
        ++d.accepted;
        ++stream;
        break;
      }
      if (d.proposals >= 20000 &&
          d.accepted * 10000 < d.proposals) {
        throw NumericError(
            "rejection sampler stalled: " + std::to_string(d.accepted) +
            " accepted in " + std::to_string(d.proposals) +
            " proposals with bound " + format_double(M));
      }
    }
  }
  d.bound = M;
  if (diag) *diag = d;
  return out;
}

Figure4Output figure4(std::uint64_t seed, const std::string& out_dir,
                      int grid_n, double spacing_km) {
  std::filesystem::create_directories(out_dir);
  Figure4Output out;
  out.seed = seed;
  out.alpha = 5.0;
  out.grid_n = grid_n;
  out.spacing_km = spacing_km;

  const SiteLayout layout = SiteLayout::grid(grid_n, spacing_km);
  nlohmann::json jfields = nlohmann::json::array();
  for (const double lambda : {2.0, 5.0, 10.0}) {
    const Semivariogram sv{1.0, std::log(lambda), 0.0};
    RParetoSampler sampler(out.alpha, RiskFunctional{1.0},
                           FbmSampler(layout, sv, 0.0));
    const std::vector<Eigen::VectorXd> z =
        sampler.sample(1, 1.0, CounterRng(seed));

    Figure4Field f;
    f.lambda = lambda;
    f.effective_range_km = effective_range(sv, 0.0);
    f.values.resize(grid_n, grid_n);
    std::string csv = "x,y,value\n";
    for (int iy = 0; iy < grid_n; ++iy) {
      for (int ix = 0; ix < grid_n; ++ix) {
        const double v = z[0](static_cast<Eigen::Index>(iy) * grid_n + ix);
        f.values(iy, ix) = v;
        csv += format_double(ix * spacing_km);
        csv += ',';
        csv += format_double(iy * spacing_km);
        csv += ',';
        csv += format_double(v);
        csv += '\n';
      }
    }
    f.csv_path = out_dir + "/figure4_lambda" +
                 std::to_string(static_cast<int>(lambda)) + ".csv";
    write_text_file(f.csv_path, csv);

    nlohmann::json jf;
    jf["lambda"] = lambda;
    jf["effective_range_km"] = f.effective_range_km;
    jf["csv"] = std::filesystem::path(f.csv_path).filename().string();
    jfields.push_back(jf);
    out.fields.push_back(std::move(f));
  }

  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["alpha"] = out.alpha;
  manifest["grid_n"] = grid_n;
  manifest["spacing_km"] = spacing_km;
  manifest["fields"] = jfields;
  out.manifest_path = out_dir + "/figure4.json";
  write_text_file(out.manifest_path, manifest.dump(2) + "\n");
  return out;
}

EventSet simulate_eventset(const Semivariogram& sv_true,
                           const std::vector<double>& temps, int n_sites,
                           int n_events, double theta, std::uint64_t seed) {
  sv_true.validate();
  if (temps.empty()) throw ConfigError("covariate value list is empty");
  if (n_sites < 2) throw ConfigError("need at least two sites");
  if (n_events < 1) throw ConfigError("need at least one event");
  if (!(theta > 0.0)) throw ConfigError("risk exponent must be positive");

  const CounterRng root(seed);
  const double extent = 8.0 * std::exp(sv_true.lambda0);
  const SiteLayout layout =
      SiteLayout::scattered(n_sites, extent, root.substream(0).seed());
  const RiskFunctional risk{theta};

  EventSet es;
  es.site_xy = layout.sites;
  es.threshold = 1.0;
  es.theta = theta;
  es.events.reserve(static_cast<std::size_t>(n_events));
  for (int e = 0; e < n_events; ++e) {
    const CounterRng ev = root.substream(static_cast<std::uint64_t>(e) + 1);
    const std::size_t ti = std::min<std::size_t>(
        temps.size() - 1,
        static_cast<std::size_t>(ev.uniform(0) *
                                 static_cast<double>(temps.size())));
    const double temp = temps[ti];

    // The intensity model is homogeneous of degree -(m+1); events are drawn
    // with the matching unit tail index.
    RParetoSampler sampler(1.0, risk, FbmSampler(layout, sv_true, temp));
    const std::vector<Eigen::VectorXd> z =
        sampler.sample(1, es.threshold, ev.substream(1));

    Event event;
    event.day = e;
    event.temp = temp;
    event.sites.resize(static_cast<std::size_t>(n_sites));
    std::iota(event.sites.begin(), event.sites.end(), 0u);
    event.y.assign(z[0].data(), z[0].data() + z[0].size());
    event.r_value =
        risk(std::span<const double>(event.y.data(), event.y.size()));
    es.events.push_back(std::move(event));
  }
  return es;
}

}  // namespace spex
