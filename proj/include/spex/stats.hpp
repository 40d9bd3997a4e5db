#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace spex {

// Standard normal distribution. norm_cdf is erfc-based, norm_quantile is
// Wichura's AS241 PPND16; both are accurate well below 1e-10 absolute.
double norm_cdf(double x);
double norm_quantile(double p);
double norm_logpdf(double x);

// Gamma-family special functions.
double digamma(double x);
double trigamma(double x);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Inverse of gamma_p in x for fixed a.
double gamma_p_inv(double a, double p);

/// Gamma(shape k, mean mu) cdf and quantile.
double gamma_cdf_mean(double y, double shape, double mean);
double gamma_quantile_mean(double p, double shape, double mean);
double gamma_logpdf_mean(double y, double shape, double mean);

// Generalized Pareto with scale sigma > 0 and shape xi. The xi -> 0 limit is
// the exponential distribution; all three switch to the stable branch for
// tiny |xi|.
double gp_cdf(double y, double sigma, double xi);
double gp_quantile(double p, double sigma, double xi);
double gp_logpdf(double y, double sigma, double xi);

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);

/// Type-7 (linear interpolation) quantile of an unsorted sample.
double quantile(std::vector<double> v, double q);

/// One-sample Kolmogorov-Smirnov statistic for PIT values against U(0,1).
/// `u` need not be sorted.
double ks_statistic(std::vector<double> u);
/// Asymptotic Kolmogorov p-value for statistic d at sample size n.
double ks_pvalue(double d, std::size_t n);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace spex
