#pragma once

#include <Eigen/Dense>
#include <functional>

namespace spex {

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Objective: returns f(x); writes the gradient into *grad when non-null.
using Objective =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct BfgsOptions {
  int max_iter = 200;
  double grad_tol = 1e-7;    // max-norm of gradient
  double step_tol = 1e-12;   // relative step size
  double fd_step = 1e-6;     // central-difference step when no gradient
};

/// BFGS minimization with Armijo backtracking. Objectives may return +inf
/// to reject a region; the line search backs off. If the objective never
/// fills the gradient, a central finite difference is used.
OptimResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                          const BfgsOptions& opts = {});

/// Central finite-difference gradient of a value-only function.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h);

}  // namespace spex
