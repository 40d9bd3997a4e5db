#include "spex/gam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spex/errors.hpp"
#include "spex/optim.hpp"

namespace spex {

std::size_t table_rows(const ColumnTable& t) {
  if (t.empty()) throw DataError("covariate table is empty");
  const std::size_t n = t.begin()->second.size();
  for (const auto& [name, col] : t) {
    if (col.size() != n) {
      throw DataError("covariate column length mismatch: '" + name + "'");
    }
  }
  return n;
}

const std::vector<double>& table_col(const ColumnTable& t,
                                     const std::string& name) {
  const auto it = t.find(name);
  if (it == t.end()) throw DataError("missing covariate: '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Basis construction and evaluation
// ---------------------------------------------------------------------------

BasisSpec BasisSpec::uniform(std::string variable, int dim, double xmin,
                             double xmax, int penalty_order) {
  if (dim < 4) throw ConfigError("basis dimension must be >= 4");
  if (!(xmax > xmin)) throw ConfigError("basis range must have xmax > xmin");
  BasisSpec b;
  b.variable = std::move(variable);
  b.dim = dim;
  b.penalty_order = penalty_order;
  const double h = (xmax - xmin) / static_cast<double>(dim - 3);
  b.knots.resize(static_cast<std::size_t>(dim) + 4);
  for (int j = 0; j < dim + 4; ++j) {
    b.knots[static_cast<std::size_t>(j)] = xmin + (j - 3) * h;
  }
  return b;
}

BasisSpec BasisSpec::cyclic_uniform(std::string variable, int dim, double x0,
                                    double period, int penalty_order) {
  if (dim < 4) throw ConfigError("cyclic basis dimension must be >= 4");
  if (!(period > 0.0)) throw ConfigError("cyclic basis period must be > 0");
  BasisSpec b;
  b.variable = std::move(variable);
  b.dim = dim;
  b.penalty_order = penalty_order;
  b.cyclic = true;
  b.period = period;
  b.knots = {x0};
  return b;
}

namespace {

// Cardinal cubic B-spline with support [0,4], unit knot spacing.
double cardinal_b3(double u) {
  if (u <= 0.0 || u >= 4.0) return 0.0;
  if (u < 1.0) return u * u * u / 6.0;
  if (u < 2.0) return ((-3.0 * u + 12.0) * u - 12.0) * u / 6.0 + 4.0 / 6.0;
  if (u < 3.0) return ((3.0 * u - 24.0) * u + 60.0) * u / 6.0 - 44.0 / 6.0;
  const double v = 4.0 - u;
  return v * v * v / 6.0;
}

double cardinal_b3_deriv(double u) {
  if (u <= 0.0 || u >= 4.0) return 0.0;
  if (u < 1.0) return 0.5 * u * u;
  if (u < 2.0) return (-9.0 * u + 24.0) * u / 6.0 - 2.0;
  if (u < 3.0) return (9.0 * u - 48.0) * u / 6.0 + 10.0;
  const double v = 4.0 - u;
  return -0.5 * v * v;
}

// Nonzero cubic basis values at x within the knot domain. Writes the four
// values B_{span-3..span}(x) and returns span.
int bspline_nonzero(const std::vector<double>& knots, int dim, double x,
                    double out[4], double deriv[4]) {
  // Locate span: knots[i] <= x < knots[i+1], restricted to [3, dim-1].
  int lo = 3, hi = dim;
  if (x >= knots[static_cast<std::size_t>(dim)]) {
    lo = dim - 1;
  } else {
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (x < knots[static_cast<std::size_t>(mid)]) hi = mid;
      else lo = mid;
    }
  }
  const int i = lo;
  const auto kn = [&](int idx) { return knots[static_cast<std::size_t>(idx)]; };

  double N[4] = {1.0, 0.0, 0.0, 0.0};
  double left[4], right[4];
  double N2[3] = {0.0, 0.0, 0.0};  // degree-2 values B_{i-2..i,2}
  for (int d = 1; d <= 3; ++d) {
    left[d] = x - kn(i + 1 - d);
    right[d] = kn(i + d) - x;
    double saved = 0.0;
    for (int r = 0; r < d; ++r) {
      const double denom = right[r + 1] + left[d - r];
      const double temp = N[r] / denom;
      N[r] = saved + right[r + 1] * temp;
      saved = left[d - r] * temp;
    }
    N[d] = saved;
    if (d == 2) {
      N2[0] = N[0];
      N2[1] = N[1];
      N2[2] = N[2];
    }
  }
  for (int r = 0; r < 4; ++r) out[r] = N[r];

  if (deriv) {
    // B'_{j,3} = 3 (B_{j,2}/(t_{j+3}-t_j) - B_{j+1,2}/(t_{j+4}-t_{j+1})),
    // with B_{j,2} nonzero only for j = i-2..i.
    const auto deg2 = [&](int j) -> double {
      const int r = j - (i - 2);
      return (r >= 0 && r < 3) ? N2[r] : 0.0;
    };
    for (int r = 0; r < 4; ++r) {
      const int j = i - 3 + r;
      const double d1 = kn(j + 3) - kn(j);
      const double d2 = kn(j + 4) - kn(j + 1);
      deriv[r] = 3.0 * (deg2(j) / d1 - deg2(j + 1) / d2);
    }
  }
  return i;
}

}  // namespace

Eigen::RowVectorXd BasisSpec::eval(double x, Eigen::RowVectorXd* deriv) const {
  if (!std::isfinite(x)) throw DataError("non-finite basis input");
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(dim);
  if (deriv) deriv->setZero(dim);

  if (cyclic) {
    const double h = period / static_cast<double>(dim);
    double u = std::fmod((x - knots[0]) / h, static_cast<double>(dim));
    if (u < 0.0) u += static_cast<double>(dim);
    for (int j = 0; j < dim; ++j) {
      double w = u - static_cast<double>(j);
      w -= std::floor(w / static_cast<double>(dim)) * static_cast<double>(dim);
      if (w < 4.0) {
        row[j] = cardinal_b3(w);
        if (deriv) (*deriv)[j] = cardinal_b3_deriv(w) / h;
      }
    }
    return row;
  }

  const double xmin = knots[3];
  const double xmax = knots[static_cast<std::size_t>(dim)];
  if (x >= xmin && x <= xmax) {
    double vals[4], der[4];
    const int span = bspline_nonzero(knots, dim, x, vals, deriv ? der : nullptr);
    for (int r = 0; r < 4; ++r) {
      row[span - 3 + r] = vals[r];
      if (deriv) (*deriv)[span - 3 + r] = der[r];
    }
    return row;
  }

  // Linear extension beyond the boundary: value + slope * overshoot. This
  // preserves the partition of unity (slopes sum to zero).
  const double xb = (x < xmin) ? xmin : xmax;
  double vals[4], der[4];
  const int span = bspline_nonzero(knots, dim, xb, vals, der);
  for (int r = 0; r < 4; ++r) {
    row[span - 3 + r] = vals[r] + der[r] * (x - xb);
    if (deriv) (*deriv)[span - 3 + r] = der[r];
  }
  return row;
}

Eigen::MatrixXd BasisSpec::penalty() const {
  const int k = dim;
  if (cyclic) {
    // Circular difference of the requested order.
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      if (penalty_order == 1) {
        D(i, i) = -1.0;
        D(i, (i + 1) % k) = 1.0;
      } else {
        D(i, (i + k - 1) % k) = 1.0;
        D(i, i) = -2.0;
        D(i, (i + 1) % k) = 1.0;
      }
    }
    return D.transpose() * D;
  }
  const int rows = k - penalty_order;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(rows, k);
  for (int i = 0; i < rows; ++i) {
    if (penalty_order == 1) {
      D(i, i) = -1.0;
      D(i, i + 1) = 1.0;
    } else {
      D(i, i) = 1.0;
      D(i, i + 1) = -2.0;
      D(i, i + 2) = 1.0;
    }
  }
  return D.transpose() * D;
}

void LinearPredictorSpec::validate() const {
  std::vector<std::string> names;
  for (const auto& t : terms) names.push_back(t.name);
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
    throw ConfigError("duplicate term names in linear predictor");
  }
  for (const auto& t : terms) {
    if (const auto* b = std::get_if<BasisSpec>(&t.kind)) {
      if (b->dim < 4) throw ConfigError("basis dimension must be >= 4");
      if (!b->cyclic) {
        for (std::size_t i = 3; i + 1 <= static_cast<std::size_t>(b->dim);
             ++i) {
          if (!(b->knots[i] < b->knots[i + 1])) {
            throw ConfigError("knots must be strictly increasing");
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Design assembly
// ---------------------------------------------------------------------------

Design build_design(const LinearPredictorSpec& spec, const ColumnTable& data) {
  spec.validate();
  const std::size_t n = table_rows(data);

  std::size_t p = spec.intercept ? 1 : 0;
  for (const auto& t : spec.terms) {
    if (std::holds_alternative<LinearTerm>(t.kind)) p += 1;
    else if (const auto* b = std::get_if<BasisSpec>(&t.kind)) p += b->dim;
    else p += std::get<TensorSpec>(t.kind).dim();
  }

  Design d;
  d.intercept = spec.intercept;
  d.X.setZero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::size_t off = 0;
  if (spec.intercept) {
    d.X.col(0).setOnes();
    off = 1;
  }

  for (std::size_t ti = 0; ti < spec.terms.size(); ++ti) {
    const auto& t = spec.terms[ti];
    if (const auto* lin = std::get_if<LinearTerm>(&t.kind)) {
      const auto& col = table_col(data, lin->variable);
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(col[i])) {
          throw DataError("non-finite covariate: '" + lin->variable + "'");
        }
        d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(off)) =
            col[i];
      }
      d.term_spans.emplace_back(off, 1);
      off += 1;
    } else if (const auto* b = std::get_if<BasisSpec>(&t.kind)) {
      const auto& col = table_col(data, b->variable);
      for (std::size_t i = 0; i < n; ++i) {
        d.X.block(static_cast<Eigen::Index>(i),
                  static_cast<Eigen::Index>(off), 1, b->dim) =
            b->eval(col[i]);
      }
      d.penalties.push_back({ti, off, static_cast<std::size_t>(b->dim),
                             b->penalty(), t.name});
      d.term_spans.emplace_back(off, static_cast<std::size_t>(b->dim));
      off += static_cast<std::size_t>(b->dim);
    } else {
      const auto& ts = std::get<TensorSpec>(t.kind);
      const auto& ca = table_col(data, ts.a.variable);
      const auto& cb = table_col(data, ts.b.variable);
      const int ka = ts.a.dim, kb = ts.b.dim;
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::RowVectorXd ra = ts.a.eval(ca[i]);
        const Eigen::RowVectorXd rb = ts.b.eval(cb[i]);
        for (int ja = 0; ja < ka; ++ja) {
          for (int jb = 0; jb < kb; ++jb) {
            d.X(static_cast<Eigen::Index>(i),
                static_cast<Eigen::Index>(off) + ja * kb + jb) =
                ra[ja] * rb[jb];
          }
        }
      }
      const Eigen::MatrixXd Ia = Eigen::MatrixXd::Identity(ka, ka);
      const Eigen::MatrixXd Ib = Eigen::MatrixXd::Identity(kb, kb);
      const Eigen::MatrixXd Sa = ts.a.penalty();
      const Eigen::MatrixXd Sb = ts.b.penalty();
      const auto kron = [](const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
        Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
        for (Eigen::Index r = 0; r < A.rows(); ++r) {
          for (Eigen::Index c = 0; c < A.cols(); ++c) {
            K.block(r * B.rows(), c * B.cols(), B.rows(), B.cols()) =
                A(r, c) * B;
          }
        }
        return K;
      };
      d.penalties.push_back({ti, off, static_cast<std::size_t>(ka * kb),
                             kron(Sa, Ib), t.name + ".a"});
      d.penalties.push_back({ti, off, static_cast<std::size_t>(ka * kb),
                             kron(Ia, Sb), t.name + ".b"});
      d.term_spans.emplace_back(off, static_cast<std::size_t>(ka * kb));
      off += static_cast<std::size_t>(ka * kb);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Constraint absorption
// ---------------------------------------------------------------------------

namespace {

// Orthonormal basis of the null space of c^T via one Householder reflector.
Eigen::MatrixXd nullspace_of(const Eigen::VectorXd& c) {
  const Eigen::Index k = c.size();
  Eigen::VectorXd v = c;
  const double nrm = c.norm();
  v[0] += (c[0] >= 0.0 ? nrm : -nrm);
  const double vtv = v.squaredNorm();
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(k, k);
  if (vtv > 0.0) H -= (2.0 / vtv) * (v * v.transpose());
  return H.rightCols(k - 1);  // columns orthogonal to c
}

// Reduced (identifiable) parameterization: penalized blocks lose one
// dimension each to a sum-to-zero constraint when an intercept is present.
struct Reduction {
  Eigen::MatrixXd X;                        // n x p_reduced
  std::vector<Eigen::MatrixXd> S;           // reduced penalty per block
  std::vector<std::size_t> offset;          // block offsets in reduced space
  std::vector<std::size_t> size;            // block sizes in reduced space
  std::vector<Eigen::MatrixXd> Z;           // per-term back map (raw x red)
  std::size_t p_reduced = 0;
  std::size_t p_raw = 0;

  Eigen::VectorXd to_raw(const Eigen::VectorXd& beta_red,
                         const Design& design) const {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(p_raw));
    // Unconstrained leading columns (intercept + linear terms interleaved)
    // are copied through; constrained blocks map via Z.
    std::size_t ri = 0;
    std::size_t zi = 0;
    const auto spans = constrained_spans(design);
    for (std::size_t col = 0; col < p_raw;) {
      if (zi < spans.size() && spans[zi].first == col) {
        const std::size_t k = spans[zi].second;
        const auto& Zb = Z[zi];
        full.segment(static_cast<Eigen::Index>(col),
                     static_cast<Eigen::Index>(k)) =
            Zb * beta_red.segment(static_cast<Eigen::Index>(ri), Zb.cols());
        ri += static_cast<std::size_t>(Zb.cols());
        col += k;
        ++zi;
      } else {
        full[static_cast<Eigen::Index>(col)] =
            beta_red[static_cast<Eigen::Index>(ri)];
        ++ri;
        ++col;
      }
    }
    return full;
  }

  static std::vector<std::pair<std::size_t, std::size_t>> constrained_spans(
      const Design& design) {
    // Unique (offset, size) spans holding at least one penalty block, in
    // column order; these get the constraint when an intercept is present.
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    if (!design.intercept) return spans;
    for (const auto& pb : design.penalties) {
      if (spans.empty() || spans.back().first != pb.offset) {
        spans.emplace_back(pb.offset, pb.size);
      }
    }
    return spans;
  }
};

Reduction reduce_design(const Design& design) {
  Reduction r;
  r.p_raw = static_cast<std::size_t>(design.X.cols());
  const auto spans = Reduction::constrained_spans(design);

  // Column map raw -> reduced.
  std::vector<Eigen::MatrixXd> Zs;
  std::size_t p_red = r.p_raw;
  for (const auto& [off, size] : spans) {
    Eigen::VectorXd c = design.X
                            .middleCols(static_cast<Eigen::Index>(off),
                                        static_cast<Eigen::Index>(size))
                            .colwise()
                            .sum()
                            .transpose();
    if (c.norm() == 0.0) {
      Zs.push_back(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(size),
                                             static_cast<Eigen::Index>(size)));
    } else {
      Zs.push_back(nullspace_of(c));
      p_red -= 1;
    }
  }
  r.Z = Zs;
  r.p_reduced = p_red;

  r.X.resize(design.X.rows(), static_cast<Eigen::Index>(p_red));
  std::vector<std::size_t> raw_to_red_offset(r.p_raw + 1, 0);
  {
    std::size_t red = 0, zi = 0;
    for (std::size_t col = 0; col < r.p_raw;) {
      raw_to_red_offset[col] = red;
      if (zi < spans.size() && spans[zi].first == col) {
        const auto& Zb = Zs[zi];
        r.X.middleCols(static_cast<Eigen::Index>(red), Zb.cols()) =
            design.X.middleCols(static_cast<Eigen::Index>(col), Zb.rows()) *
            Zb;
        red += static_cast<std::size_t>(Zb.cols());
        col += static_cast<std::size_t>(Zb.rows());
        ++zi;
      } else {
        r.X.col(static_cast<Eigen::Index>(red)) =
            design.X.col(static_cast<Eigen::Index>(col));
        ++red;
        ++col;
      }
    }
    raw_to_red_offset[r.p_raw] = red;
  }

  for (const auto& pb : design.penalties) {
    // Find this block's span position to pick its Z.
    Eigen::MatrixXd Zb =
        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(pb.size),
                                  static_cast<Eigen::Index>(pb.size));
    for (std::size_t zi = 0; zi < spans.size(); ++zi) {
      if (spans[zi].first == pb.offset) {
        Zb = Zs[zi];
        break;
      }
    }
    r.S.push_back(Zb.transpose() * pb.S * Zb);
    r.offset.push_back(raw_to_red_offset[pb.offset]);
    r.size.push_back(static_cast<std::size_t>(Zb.cols()));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Penalized IRLS
// ---------------------------------------------------------------------------

constexpr double kEtaBound = 30.0;

struct IrlsResult {
  Eigen::VectorXd beta;  // reduced space
  ConvergenceReport report;
};

double deviance_of(Family family, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& mu) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    switch (family) {
      case Family::GaussianIdentity: {
        const double r = y[i] - mu[i];
        dev += r * r;
        break;
      }
      case Family::GammaLog: {
        dev += 2.0 * ((y[i] - mu[i]) / mu[i] - std::log(y[i] / mu[i]));
        break;
      }
      case Family::BinomialLogit: {
        const double m = std::clamp(mu[i], 1e-12, 1.0 - 1e-12);
        dev += -2.0 * (y[i] * std::log(m) + (1.0 - y[i]) * std::log(1.0 - m));
        break;
      }
      default:
        throw ConfigError("deviance: unsupported family");
    }
  }
  return dev;
}

IrlsResult irls_fit(const Reduction& red, const Eigen::VectorXd& y,
                    Family family, const std::vector<double>& lambda) {
  const Eigen::Index n = red.X.rows();
  const Eigen::Index p = red.X.cols();

  Eigen::MatrixXd Slam = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t b = 0; b < red.S.size(); ++b) {
    Slam.block(static_cast<Eigen::Index>(red.offset[b]),
               static_cast<Eigen::Index>(red.offset[b]),
               static_cast<Eigen::Index>(red.size[b]),
               static_cast<Eigen::Index>(red.size[b])) +=
        lambda[b] * red.S[b];
  }

  // Initial mean.
  Eigen::VectorXd mu(n), eta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (family) {
      case Family::GaussianIdentity:
        mu[i] = y[i];
        eta[i] = mu[i];
        break;
      case Family::GammaLog:
        mu[i] = std::max(y[i], 1e-8);
        eta[i] = std::log(mu[i]);
        break;
      case Family::BinomialLogit:
        mu[i] = (y[i] + 0.5) / 2.0;
        eta[i] = std::log(mu[i] / (1.0 - mu[i]));
        break;
      default:
        throw ConfigError("irls: unsupported family");
    }
  }

  IrlsResult out;
  out.beta.setZero(p);
  double prev_pdev = std::numeric_limits<double>::infinity();
  bool clamped = false;
  Eigen::MatrixXd XtWX;

  const int max_iter = 100;
  for (int it = 0; it < max_iter; ++it) {
    out.report.iterations = it + 1;
    Eigen::VectorXd w(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      switch (family) {
        case Family::GaussianIdentity:
          w[i] = 1.0;
          z[i] = y[i];
          break;
        case Family::GammaLog:
          w[i] = 1.0;
          z[i] = eta[i] + (y[i] - mu[i]) / mu[i];
          break;
        case Family::BinomialLogit: {
          const double v = std::max(mu[i] * (1.0 - mu[i]), 1e-12);
          w[i] = v;
          z[i] = eta[i] + (y[i] - mu[i]) / v;
          break;
        }
        default:
          throw ConfigError("irls: unsupported family");
      }
    }

    XtWX = red.X.transpose() * w.asDiagonal() * red.X;
    const Eigen::VectorXd rhs = red.X.transpose() * (w.cwiseProduct(z));
    Eigen::LLT<Eigen::MatrixXd> llt(XtWX + Slam);
    if (llt.info() != Eigen::Success) {
      throw NumericError("singular weighted normal equations");
    }
    out.beta = llt.solve(rhs);

    eta = red.X * out.beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (eta[i] > kEtaBound || eta[i] < -kEtaBound) {
        clamped = true;
        eta[i] = std::clamp(eta[i], -kEtaBound, kEtaBound);
      }
      switch (family) {
        case Family::GaussianIdentity:
          mu[i] = eta[i];
          break;
        case Family::GammaLog:
          mu[i] = std::exp(eta[i]);
          break;
        case Family::BinomialLogit:
          mu[i] = 1.0 / (1.0 + std::exp(-eta[i]));
          break;
        default:
          break;
      }
    }

    const double dev = deviance_of(family, y, mu);
    const double pdev = dev + out.beta.dot(Slam * out.beta);
    out.report.deviance = dev;
    if (std::fabs(pdev - prev_pdev) < 1e-8 * (std::fabs(pdev) + 1e-8)) {
      out.report.converged = true;
      break;
    }
    prev_pdev = pdev;
  }
  // Saturated logits mean separation: the unbounded optimum sits at
  // infinity and the reported coefficients are the bounded surrogate.
  out.report.divergence_guard =
      clamped || (family == Family::BinomialLogit &&
                  eta.cwiseAbs().maxCoeff() > 25.0);

  // Effective degrees of freedom at the converged weights.
  Eigen::LLT<Eigen::MatrixXd> llt(XtWX + Slam);
  if (llt.info() == Eigen::Success) {
    out.report.edf = (llt.solve(XtWX)).trace();
  } else {
    out.report.edf = static_cast<double>(p);
  }
  const double denom =
      std::max(static_cast<double>(n) - out.report.edf, 1e-3);
  out.report.gcv =
      static_cast<double>(n) * out.report.deviance / (denom * denom);
  return out;
}

std::vector<double> gcv_grid() {
  std::vector<double> g;
  for (int i = 0; i < 10; ++i) {
    g.push_back(std::pow(10.0, -4.0 + 10.0 * i / 9.0));
  }
  return g;
}

void validate_response(Family family, const Eigen::VectorXd& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) throw DataError("non-finite response");
    if (family == Family::GammaLog && !(y[i] > 0.0)) {
      throw DataError("gamma response must be positive");
    }
    if (family == Family::BinomialLogit && (y[i] < 0.0 || y[i] > 1.0)) {
      throw DataError("binomial response must lie in [0,1]");
    }
  }
}

}  // namespace

PenalizedFit fit_penalized(const Design& design, const Eigen::VectorXd& y,
                           Family family, const Smoothing& smoothing) {
  if (design.X.rows() != y.size()) {
    throw DataError("design and response row counts differ");
  }
  validate_response(family, y);
  const Reduction red = reduce_design(design);
  const std::size_t nblocks = red.S.size();

  std::vector<double> lambda(nblocks, 1.0);
  if (smoothing.is_fixed()) {
    if (smoothing.fixed.size() != nblocks) {
      throw ConfigError("fixed smoothing length does not match penalty count");
    }
    lambda = smoothing.fixed;
  } else if (nblocks > 0) {
    // Coordinate-wise GCV over a log grid, two sweeps.
    const auto grid = gcv_grid();
    for (int sweep = 0; sweep < 2; ++sweep) {
      for (std::size_t b = 0; b < nblocks; ++b) {
        double best_gcv = std::numeric_limits<double>::infinity();
        double best_lam = lambda[b];
        for (double cand : grid) {
          auto trial = lambda;
          trial[b] = cand;
          try {
            const auto fit = irls_fit(red, y, family, trial);
            if (fit.report.converged && fit.report.gcv < best_gcv) {
              best_gcv = fit.report.gcv;
              best_lam = cand;
            }
          } catch (const NumericError&) {
            // Candidate leaves the system singular; the final fit at the
            // chosen smoothing still signals if that persists.
          }
        }
        lambda[b] = best_lam;
      }
    }
  }

  const auto fit = irls_fit(red, y, family, lambda);
  if (!fit.report.converged && !fit.report.divergence_guard) {
    throw NumericError("penalized IRLS failed to converge");
  }

  PenalizedFit out;
  out.coef = red.to_raw(fit.beta, design);
  out.smoothing = lambda;
  out.family = family;
  out.report = fit.report;
  if (family == Family::GammaLog) {
    const Eigen::VectorXd eta = design.X * out.coef;
    double pearson = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double mu = std::exp(std::clamp(eta[i], -kEtaBound, kEtaBound));
      const double r = (y[i] - mu) / mu;
      pearson += r * r;
    }
    const double dof =
        std::max(static_cast<double>(y.size()) - fit.report.edf, 1.0);
    out.dispersion = pearson / dof;
  }
  if (!out.coef.allFinite()) throw NumericError("non-finite coefficients");
  return out;
}

// ---------------------------------------------------------------------------
// Generalized Pareto tail fit
// ---------------------------------------------------------------------------

namespace {

double xi_of(double a) { return -0.5 + 1.5 / (1.0 + std::exp(-a)); }
double a_of_xi(double xi) {
  const double s = (xi + 0.5) / 1.5;
  return std::log(s / (1.0 - s));
}

struct GpObjective {
  const Reduction& red;
  const Eigen::VectorXd& e;  // exceedances
  const Eigen::VectorXd& logu;
  Eigen::MatrixXd Slam;

  // x = (beta_reduced, a); returns penalized negative log-likelihood.
  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
    const Eigen::Index p = red.X.cols();
    const Eigen::VectorXd beta = x.head(p);
    const double a = x[p];
    const double xi = xi_of(a);
    const Eigen::VectorXd eta = red.X * beta;

    double nll = 0.0;
    Eigen::VectorXd dl_deta(e.size());
    double dl_dxi = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      const double logsig = logu[i] + eta[i];
      const double z = e[i] * std::exp(-logsig);
      if (std::fabs(xi) < 1e-6) {
        nll += logsig + z + xi * z * (2.0 - z) / 2.0;
        dl_deta[i] = -1.0 + z + xi * z * (1.0 - z);
        dl_dxi += -z * (2.0 - z) / 2.0;
      } else {
        const double A = 1.0 + xi * z;
        if (A <= 0.0) return std::numeric_limits<double>::infinity();
        const double logA = std::log1p(xi * z);
        nll += logsig + (1.0 + 1.0 / xi) * logA;
        dl_deta[i] = (1.0 + xi) * z / A - 1.0;
        dl_dxi += logA / (xi * xi) - (1.0 + 1.0 / xi) * z / A;
      }
    }
    nll += 0.5 * beta.dot(Slam * beta);
    if (grad) {
      grad->resize(p + 1);
      grad->head(p) = -(red.X.transpose() * dl_deta) + Slam * beta;
      const double s = 1.0 / (1.0 + std::exp(-a));
      (*grad)[p] = -dl_dxi * 1.5 * s * (1.0 - s);
    }
    return nll;
  }
};

}  // namespace

PenalizedFit fit_gp_tail(const Design& design,
                         const Eigen::VectorXd& exceedances,
                         const Eigen::VectorXd& u, const Smoothing& smoothing) {
  if (design.X.rows() != exceedances.size() ||
      u.size() != exceedances.size()) {
    throw DataError("design, exceedance, and threshold sizes differ");
  }
  double emin = std::numeric_limits<double>::infinity(), emax = 0.0;
  for (Eigen::Index i = 0; i < exceedances.size(); ++i) {
    if (!(exceedances[i] > 0.0) || !(u[i] > 0.0)) {
      throw DataError("exceedances and thresholds must be positive");
    }
    emin = std::min(emin, exceedances[i]);
    emax = std::max(emax, exceedances[i]);
  }
  if (!(emax > emin)) throw DataError("degenerate all-equal exceedances");

  const Reduction red = reduce_design(design);
  const Eigen::Index p = red.X.cols();
  const Eigen::VectorXd logu = u.array().log();
  const std::size_t nblocks = red.S.size();

  const auto solve_for = [&](const std::vector<double>& lambda) {
    GpObjective obj{red, exceedances, logu, Eigen::MatrixXd::Zero(p, p)};
    for (std::size_t b = 0; b < nblocks; ++b) {
      obj.Slam.block(static_cast<Eigen::Index>(red.offset[b]),
                     static_cast<Eigen::Index>(red.offset[b]),
                     static_cast<Eigen::Index>(red.size[b]),
                     static_cast<Eigen::Index>(red.size[b])) +=
          lambda[b] * red.S[b];
    }
    OptimResult best;
    best.value = std::numeric_limits<double>::infinity();
    for (double xi0 : {0.05, 0.3}) {
      Eigen::VectorXd x0 = Eigen::VectorXd::Zero(p + 1);
      x0[p] = a_of_xi(xi0);
      BfgsOptions opts;
      opts.max_iter = 400;
      opts.grad_tol = 1e-6;
      const auto r = minimize_bfgs(
          [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
            return obj(x, g);
          },
          x0, opts);
      if (r.value < best.value) best = r;
    }
    return best;
  };

  // Effective dof from the eta-curvature pseudo-weights.
  const auto edf_of = [&](const OptimResult& r,
                          const std::vector<double>& lambda) {
    const Eigen::VectorXd beta = r.x.head(p);
    const double xi = xi_of(r.x[p]);
    const Eigen::VectorXd eta = red.X * beta;
    Eigen::VectorXd w(exceedances.size());
    for (Eigen::Index i = 0; i < exceedances.size(); ++i) {
      const double z = exceedances[i] * std::exp(-(logu[i] + eta[i]));
      const double A = std::max(1.0 + xi * z, 1e-8);
      w[i] = std::max((1.0 + xi) * z / (A * A), 0.0);
    }
    const Eigen::MatrixXd XtWX = red.X.transpose() * w.asDiagonal() * red.X;
    Eigen::MatrixXd Slam = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t b = 0; b < nblocks; ++b) {
      Slam.block(static_cast<Eigen::Index>(red.offset[b]),
                 static_cast<Eigen::Index>(red.offset[b]),
                 static_cast<Eigen::Index>(red.size[b]),
                 static_cast<Eigen::Index>(red.size[b])) +=
          lambda[b] * red.S[b];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(XtWX + Slam);
    if (llt.info() != Eigen::Success) return static_cast<double>(p);
    return llt.solve(XtWX).trace() + 1.0;  // +1 for the shape
  };

  std::vector<double> lambda(nblocks, 1.0);
  OptimResult sol;
  if (smoothing.is_fixed()) {
    if (smoothing.fixed.size() != nblocks) {
      throw ConfigError("fixed smoothing length does not match penalty count");
    }
    lambda = smoothing.fixed;
    sol = solve_for(lambda);
  } else if (nblocks == 0) {
    sol = solve_for(lambda);
  } else {
    const auto grid = gcv_grid();
    const double n = static_cast<double>(exceedances.size());
    for (std::size_t b = 0; b < nblocks; ++b) {
      double best_gcv = std::numeric_limits<double>::infinity();
      double best_lam = lambda[b];
      for (double cand : grid) {
        auto trial = lambda;
        trial[b] = cand;
        const auto r = solve_for(trial);
        if (!r.converged) continue;
        const double edf = edf_of(r, trial);
        const double denom = std::max(n - edf, 1e-3);
        const double gcv = n * (2.0 * r.value) / (denom * denom);
        if (gcv < best_gcv) {
          best_gcv = gcv;
          best_lam = cand;
        }
      }
      lambda[b] = best_lam;
    }
    sol = solve_for(lambda);
  }

  if (!sol.converged) {
    throw NumericError("GP tail fit failed to converge");
  }

  PenalizedFit out;
  out.coef = red.to_raw(sol.x.head(p), design);
  out.smoothing = lambda;
  out.family = Family::GpTail;
  out.xi = xi_of(sol.x[p]);
  out.report.converged = sol.converged;
  out.report.iterations = sol.iterations;
  out.report.deviance = 2.0 * sol.value;
  out.report.edf = edf_of(sol, lambda);
  if (!out.coef.allFinite()) throw NumericError("non-finite coefficients");
  return out;
}

// ---------------------------------------------------------------------------
// Prediction and serialization
// ---------------------------------------------------------------------------

Eigen::VectorXd predict_eta(const LinearPredictorSpec& spec,
                            const PenalizedFit& fit, const ColumnTable& data) {
  const Design d = build_design(spec, data);
  if (d.X.cols() != fit.coef.size()) {
    throw ConfigError("fit does not match linear predictor layout");
  }
  return d.X * fit.coef;
}

Eigen::VectorXd predict_mean(const LinearPredictorSpec& spec,
                             const PenalizedFit& fit, const ColumnTable& data) {
  Eigen::VectorXd eta = predict_eta(spec, fit, data);
  switch (fit.family) {
    case Family::GaussianIdentity:
      return eta;
    case Family::GammaLog:
    case Family::GpTail:
      return eta.array().exp();
    case Family::BinomialLogit:
      return (1.0 / (1.0 + (-eta.array()).exp())).matrix();
  }
  throw ConfigError("predict_mean: unsupported family");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::GaussianIdentity:
      return "gaussian-identity";
    case Family::GammaLog:
      return "gamma-log";
    case Family::BinomialLogit:
      return "binomial-logit";
    case Family::GpTail:
      return "gp-tail";
  }
  return "unknown";
}

namespace {

Family family_from_name(const std::string& s) {
  if (s == "gaussian-identity") return Family::GaussianIdentity;
  if (s == "gamma-log") return Family::GammaLog;
  if (s == "binomial-logit") return Family::BinomialLogit;
  if (s == "gp-tail") return Family::GpTail;
  throw ConfigError("unknown family label: '" + s + "'");
}

nlohmann::json basis_to_json(const BasisSpec& b) {
  return {{"variable", b.variable}, {"knots", b.knots},
          {"penalty_order", b.penalty_order}, {"cyclic", b.cyclic},
          {"period", b.period}, {"dim", b.dim}};
}

BasisSpec basis_from_json(const nlohmann::json& j) {
  BasisSpec b;
  b.variable = j.at("variable").get<std::string>();
  b.knots = j.at("knots").get<std::vector<double>>();
  b.penalty_order = j.at("penalty_order").get<int>();
  b.cyclic = j.at("cyclic").get<bool>();
  b.period = j.at("period").get<double>();
  b.dim = j.at("dim").get<int>();
  return b;
}

}  // namespace

nlohmann::json spec_to_json(const LinearPredictorSpec& spec) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : spec.terms) {
    nlohmann::json jt{{"name", t.name}};
    if (const auto* lin = std::get_if<LinearTerm>(&t.kind)) {
      jt["type"] = "linear";
      jt["variable"] = lin->variable;
    } else if (const auto* b = std::get_if<BasisSpec>(&t.kind)) {
      jt["type"] = "spline";
      jt["basis"] = basis_to_json(*b);
    } else {
      const auto& ts = std::get<TensorSpec>(t.kind);
      jt["type"] = "tensor";
      jt["basis_a"] = basis_to_json(ts.a);
      jt["basis_b"] = basis_to_json(ts.b);
    }
    terms.push_back(jt);
  }
  return {{"intercept", spec.intercept}, {"terms", terms}};
}

LinearPredictorSpec spec_from_json(const nlohmann::json& j) {
  LinearPredictorSpec spec;
  spec.intercept = j.at("intercept").get<bool>();
  for (const auto& jt : j.at("terms")) {
    Term t;
    t.name = jt.at("name").get<std::string>();
    const auto type = jt.at("type").get<std::string>();
    if (type == "linear") {
      t.kind = LinearTerm{jt.at("variable").get<std::string>()};
    } else if (type == "spline") {
      t.kind = basis_from_json(jt.at("basis"));
    } else if (type == "tensor") {
      t.kind = TensorSpec{basis_from_json(jt.at("basis_a")),
                          basis_from_json(jt.at("basis_b"))};
    } else {
      throw ConfigError("unknown term type: '" + type + "'");
    }
    spec.terms.push_back(std::move(t));
  }
  return spec;
}

nlohmann::json fit_to_json(const PenalizedFit& fit) {
  std::vector<double> coef(fit.coef.data(), fit.coef.data() + fit.coef.size());
  return {{"coefficients", coef},
          {"smoothing", fit.smoothing},
          {"family", family_name(fit.family)},
          {"dispersion", fit.dispersion},
          {"xi", fit.xi},
          {"report",
           {{"iterations", fit.report.iterations},
            {"converged", fit.report.converged},
            {"divergence_guard", fit.report.divergence_guard},
            {"deviance", fit.report.deviance},
            {"edf", fit.report.edf},
            {"gcv", fit.report.gcv}}}};
}

PenalizedFit fit_from_json(const nlohmann::json& j) {
  PenalizedFit fit;
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  fit.coef = Eigen::Map<const Eigen::VectorXd>(coef.data(),
                                               static_cast<Eigen::Index>(
                                                   coef.size()));
  fit.smoothing = j.at("smoothing").get<std::vector<double>>();
  fit.family = family_from_name(j.at("family").get<std::string>());
  fit.dispersion = j.at("dispersion").get<double>();
  fit.xi = j.at("xi").get<double>();
  const auto& r = j.at("report");
  fit.report.iterations = r.at("iterations").get<int>();
  fit.report.converged = r.at("converged").get<bool>();
  fit.report.divergence_guard = r.at("divergence_guard").get<bool>();
  fit.report.deviance = r.at("deviance").get<double>();
  fit.report.edf = r.at("edf").get<double>();
  fit.report.gcv = r.at("gcv").get<double>();
  return fit;
}

}  // namespace spex
