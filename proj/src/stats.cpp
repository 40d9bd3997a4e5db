#include "spex/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "spex/errors.hpp"

namespace spex {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double norm_logpdf(double x) {
  static const double kLogSqrt2Pi = 0.9189385332046727;
  return -0.5 * x * x - kLogSqrt2Pi;
}

// AS241 PPND16 (Wichura 1988): rational approximations on three regions of
// the transformed tail variable, ~1e-16 relative accuracy.
double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw NumericError("norm_quantile: p must lie in (0,1)");
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) *
                    r +
                4.5921953931549871457e4) *
                   r +
               1.3731693765509461125e4) *
                  r +
              1.9715909503065514427e3) *
                 r +
             1.3314166789178437745e2) *
                r +
            3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) *
                    r +
                2.1213794301586595867e4) *
                   r +
               5.3941960214247511077e3) *
                  r +
              6.8718700749205790830e2) *
                 r +
             4.2313330701600911252e1) *
                r +
            1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) *
                    r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e0) *
                  r +
              3.64784832476320460504e0) *
                 r +
             5.76949722146069140550e0) *
                r +
            4.63033784615654529590e0) *
               r +
           1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) *
                    r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e0) *
                r +
            2.05319162663775882187e0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) *
                    r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e0) *
                r +
            5.46378491116411436990e0) *
               r +
           6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r +
                 1.42151175831644588870e-7) *
                    r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return (q < 0.0) ? -val : val;
}

double digamma(double x) {
  if (!(x > 0.0)) throw NumericError("digamma: x must be positive");
  double result = 0.0;
  // Recurrence up to the asymptotic region.
  while (x < 12.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double r = 1.0 / x;
  const double r2 = r * r;
  result += std::log(x) - 0.5 * r -
            r2 * (1.0 / 12.0 -
                  r2 * (1.0 / 120.0 -
                        r2 * (1.0 / 252.0 -
                              r2 * (1.0 / 240.0 - r2 * (1.0 / 132.0)))));
  return result;
}

double trigamma(double x) {
  if (!(x > 0.0)) throw NumericError("trigamma: x must be positive");
  double result = 0.0;
  while (x < 12.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  const double r = 1.0 / x;
  const double r2 = r * r;
  result +=
      r * (1.0 +
           r * (0.5 +
                r * (1.0 / 6.0 -
                     r2 * (1.0 / 30.0 -
                           r2 * (1.0 / 42.0 -
                                 r2 * (1.0 / 30.0 - r2 * (5.0 / 66.0)))))));
  return result;
}

namespace {

// Series expansion of P(a,x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-16) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw NumericError("gamma_p: series failed to converge");
}

// Continued fraction for Q(a,x) (modified Lentz), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) {
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw NumericError("gamma_p: continued fraction failed to converge");
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw NumericError("gamma_p: a must be positive");
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double gamma_p_inv(double a, double p) {
  if (!(a > 0.0)) throw NumericError("gamma_p_inv: a must be positive");
  if (!(p >= 0.0 && p < 1.0)) {
    throw NumericError("gamma_p_inv: p must lie in [0,1)");
  }
  if (p == 0.0) return 0.0;
  // Wilson-Hilferty start, then Newton on P(a,x) - p.
  const double z = norm_quantile(p);
  const double c = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * std::sqrt(a));
  double x = a * c * c * c;
  if (!(x > 0.0)) x = std::exp((std::log(p) + std::lgamma(a + 1.0)) / a);
  const double lga = std::lgamma(a);
  for (int it = 0; it < 60; ++it) {
    const double f = gamma_p(a, x) - p;
    const double logpdf = -x + (a - 1.0) * std::log(x) - lga;
    double step = f / std::exp(logpdf);
    // Halve overshoots into nonpositive territory.
    double xn = x - step;
    while (xn <= 0.0) {
      step *= 0.5;
      xn = x - step;
    }
    x = xn;
    if (std::fabs(step) < 1e-13 * (1.0 + x)) break;
  }
  return x;
}

double gamma_cdf_mean(double y, double shape, double mean) {
  if (!(shape > 0.0 && mean > 0.0)) {
    throw NumericError("gamma_cdf_mean: shape and mean must be positive");
  }
  if (y <= 0.0) return 0.0;
  return gamma_p(shape, y * shape / mean);
}

double gamma_quantile_mean(double p, double shape, double mean) {
  if (!(shape > 0.0 && mean > 0.0)) {
    throw NumericError("gamma_quantile_mean: shape and mean must be positive");
  }
  return gamma_p_inv(shape, p) * mean / shape;
}

double gamma_logpdf_mean(double y, double shape, double mean) {
  if (!(y > 0.0)) return -std::numeric_limits<double>::infinity();
  const double rate = shape / mean;
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(y) - rate * y;
}

// For |xi| below this the exponential-limit expansions are more accurate
// than the generic formulas.
static constexpr double kTinyXi = 1e-8;

double gp_cdf(double y, double sigma, double xi) {
  if (!(sigma > 0.0)) throw NumericError("gp_cdf: sigma must be positive");
  if (y <= 0.0) return 0.0;
  const double z = y / sigma;
  if (std::fabs(xi) < kTinyXi) return -std::expm1(-z);
  const double t = 1.0 + xi * z;
  if (t <= 0.0) return 1.0;  // beyond the upper endpoint (xi < 0)
  return -std::expm1(-std::log1p(xi * z) / xi);
}

double gp_quantile(double p, double sigma, double xi) {
  if (!(sigma > 0.0)) {
    throw NumericError("gp_quantile: sigma must be positive");
  }
  if (!(p >= 0.0 && p < 1.0)) {
    throw NumericError("gp_quantile: p must lie in [0,1)");
  }
  if (std::fabs(xi) < kTinyXi) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-xi * std::log1p(-p)) / xi;
}

double gp_logpdf(double y, double sigma, double xi) {
  if (!(sigma > 0.0)) throw NumericError("gp_logpdf: sigma must be positive");
  if (y < 0.0) return -std::numeric_limits<double>::infinity();
  const double z = y / sigma;
  if (std::fabs(xi) < kTinyXi) return -std::log(sigma) - z;
  const double t = 1.0 + xi * z;
  if (t <= 0.0) return -std::numeric_limits<double>::infinity();
  return -std::log(sigma) - (1.0 + 1.0 / xi) * std::log1p(xi * z);
}

double mean(std::span<const double> v) {
  if (v.empty()) throw NumericError("mean: empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) throw NumericError("sample_sd: need at least 2 values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw NumericError("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw NumericError("quantile: q out of [0,1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

double ks_statistic(std::vector<double> u) {
  if (u.empty()) throw NumericError("ks_statistic: empty sample");
  std::sort(u.begin(), u.end());
  const auto n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(u[i] - lo, hi - u[i]));
  }
  return d;
}

double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double t = (sn + 0.12 + 0.11 / sn) * d;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term =
        2.0 * ((k % 2 == 1) ? 1.0 : -1.0) *
        std::exp(-2.0 * static_cast<double>(k) * static_cast<double>(k) * t *
                 t);
    sum += term;
    if (std::fabs(term) < 1e-12) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw NumericError("spearman: need two equal-length samples, n >= 2");
  }
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw NumericError("spearman: constant sample");
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace spex
