#include "spex/optim.hpp"

#include <cmath>
#include <limits>

namespace spex {

Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::fabs(x[i]));
    xp[i] = x[i] + step;
    const double fp = f(xp);
    xp[i] = x[i] - step;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

namespace {

double eval(const Objective& f, const Eigen::VectorXd& x, double fd_step,
            Eigen::VectorXd* grad) {
  if (!grad) return f(x, nullptr);
  grad->setConstant(x.size(), std::numeric_limits<double>::quiet_NaN());
  const double v = f(x, grad);
  if (!grad->allFinite() && std::isfinite(v)) {
    *grad = fd_gradient([&](const Eigen::VectorXd& y) { return f(y, nullptr); },
                        x, fd_step);
  }
  return v;
}

}  // namespace

OptimResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                          const BfgsOptions& opts) {
  const Eigen::Index n = x0.size();
  OptimResult res;
  res.x = x0;

  Eigen::VectorXd g(n);
  double fx = eval(f, res.x, opts.fd_step, &g);
  if (!std::isfinite(fx)) {
    res.value = fx;
    return res;
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);  // inverse Hessian

  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it + 1;
    if (g.cwiseAbs().maxCoeff() < opts.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd p = -(H * g);
    double slope = g.dot(p);
    if (!(slope < 0.0)) {  // not a descent direction; reset curvature
      H.setIdentity();
      p = -g;
      slope = g.dot(p);
    }

    // Armijo backtracking.
    double alpha = 1.0;
    const double c1 = 1e-4;
    double fnew = std::numeric_limits<double>::infinity();
    Eigen::VectorXd xnew;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      xnew = res.x + alpha * p;
      fnew = f(xnew, nullptr);
      if (std::isfinite(fnew) && fnew <= fx + c1 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.converged = g.cwiseAbs().maxCoeff() < 1e3 * opts.grad_tol;
      break;
    }

    Eigen::VectorXd gnew(n);
    const double fval = eval(f, xnew, opts.fd_step, &gnew);
    const Eigen::VectorXd s = xnew - res.x;
    const Eigen::VectorXd yv = gnew - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const Eigen::VectorXd Hy = H * yv;
      const double yHy = yv.dot(Hy);
      // BFGS inverse update.
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }

    const double stepsize = s.norm() / std::max(1.0, res.x.norm());
    res.x = xnew;
    fx = fval;
    g = gnew;
    if (stepsize < opts.step_tol) {
      res.converged = true;
      break;
    }
  }
  res.value = fx;
  return res;
}

}  // namespace spex
