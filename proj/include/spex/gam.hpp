#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace spex {

/// Named columns of equal length; the covariate container every fit and
/// prediction consumes.
using ColumnTable = std::map<std::string, std::vector<double>>;

std::size_t table_rows(const ColumnTable& t);
const std::vector<double>& table_col(const ColumnTable& t,
                                     const std::string& name);

/// Cubic B-spline basis on an explicit knot vector (dimension + 4 knots,
/// nondecreasing, strictly increasing over the data span). Evaluation beyond
/// the boundary knots extends each basis function linearly, which keeps the
/// partition of unity and lands new data on the penalty null space instead
/// of failing.
struct BasisSpec {
  std::string variable;
  std::vector<double> knots;  // size = dim + 4
  int penalty_order = 2;
  bool cyclic = false;
  double period = 0.0;  // cyclic only; knots then hold {x0} and dim = k

  int dim = 0;

  static BasisSpec uniform(std::string variable, int dim, double xmin,
                           double xmax, int penalty_order = 2);
  static BasisSpec cyclic_uniform(std::string variable, int dim, double x0,
                                  double period, int penalty_order = 2);

  /// Basis row at x; if deriv is non-null also writes d/dx of each basis.
  Eigen::RowVectorXd eval(double x, Eigen::RowVectorXd* deriv = nullptr) const;

  /// Difference penalty matrix (dim x dim), circular when cyclic.
  Eigen::MatrixXd penalty() const;
};

struct TensorSpec {
  BasisSpec a;
  BasisSpec b;
  int dim() const { return a.dim * b.dim; }
};

struct LinearTerm {
  std::string variable;
};

struct Term {
  std::string name;
  std::variant<LinearTerm, BasisSpec, TensorSpec> kind;
};

struct LinearPredictorSpec {
  bool intercept = true;
  std::vector<Term> terms;

  void validate() const;  // unique names, basis invariants
};

/// One penalty block aligned with a column range of the design matrix.
struct PenaltyBlock {
  std::size_t term_index = 0;
  std::size_t offset = 0;  // first design column of the block
  std::size_t size = 0;
  Eigen::MatrixXd S;       // size x size
  std::string label;       // term name, margin-qualified for tensors
};

struct Design {
  Eigen::MatrixXd X;
  std::vector<PenaltyBlock> penalties;
  // Column span of each term (offset, size), same order as spec.terms;
  // intercept occupies column 0 when present.
  std::vector<std::pair<std::size_t, std::size_t>> term_spans;
  bool intercept = false;
};

Design build_design(const LinearPredictorSpec& spec, const ColumnTable& data);

enum class Family { GaussianIdentity, GammaLog, BinomialLogit, GpTail };
std::string family_name(Family f);

struct Smoothing {
  // One multiplier per penalty block when fixed; empty selects by GCV over
  // a log-spaced grid, coordinate-wise.
  std::vector<double> fixed;
  bool is_fixed() const { return !fixed.empty(); }
};

struct ConvergenceReport {
  int iterations = 0;
  bool converged = false;
  bool divergence_guard = false;
  double deviance = 0.0;
  double edf = 0.0;
  double gcv = 0.0;
};

struct PenalizedFit {
  Eigen::VectorXd coef;            // raw basis, aligned with Design columns
  std::vector<double> smoothing;   // per penalty block
  Family family = Family::GaussianIdentity;
  ConvergenceReport report;
  double dispersion = 1.0;         // Gamma: method-of-moments estimate
  double xi = 0.0;                 // tail fits only
};

PenalizedFit fit_penalized(const Design& design, const Eigen::VectorXd& y,
                           Family family, const Smoothing& smoothing = {});

/// Penalized GP likelihood with scale u_i * exp(eta_i) and one global shape
/// xi constrained to (-0.5, 1).
PenalizedFit fit_gp_tail(const Design& design,
                         const Eigen::VectorXd& exceedances,
                         const Eigen::VectorXd& u,
                         const Smoothing& smoothing = {});

Eigen::VectorXd predict_eta(const LinearPredictorSpec& spec,
                            const PenalizedFit& fit, const ColumnTable& data);

/// Mean-scale prediction: applies the inverse link of fit.family.
Eigen::VectorXd predict_mean(const LinearPredictorSpec& spec,
                             const PenalizedFit& fit, const ColumnTable& data);

nlohmann::json spec_to_json(const LinearPredictorSpec& spec);
LinearPredictorSpec spec_from_json(const nlohmann::json& j);
nlohmann::json fit_to_json(const PenalizedFit& fit);
PenalizedFit fit_from_json(const nlohmann::json& j);

}  // namespace spex
