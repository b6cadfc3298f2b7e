#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "pgembed/rng.hpp"
#include "pgembed/types.hpp"

namespace pgembed {

namespace pg_detail {

inline constexpr double kTrunc = 0.64;
inline constexpr double kTruncRecip = 1.0 / kTrunc;

inline double log_norm_cdf(double x) {
  return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
}

/// Alternating-series coefficient a_n(x) of the J*(1, .) density, piecewise
/// in x around the truncation point.
inline double series_coef(int n, double x) {
  const double pi = std::numbers::pi;
  const double K = (n + 0.5) * pi;
  if (x > kTrunc) return K * std::exp(-0.5 * K * K * x);
  if (x > 0.0) {
    const double expnt = -1.5 * (std::log(0.5 * pi) + std::log(x)) +
                         std::log(K) - 2.0 * (n + 0.5) * (n + 0.5) / x;
    return std::exp(expnt);
  }
  return 0.0;
}

/// Probability of proposing from the right-tail (exponential) component.
inline double mass_texpon(double z) {
  const double pi = std::numbers::pi;
  const double t = kTrunc;
  const double fz = 0.125 * pi * pi + 0.5 * z * z;
  const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
  const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
  const double x0 = std::log(fz) + fz * t;
  const double xb = x0 - z + log_norm_cdf(b);
  const double xa = x0 + z + log_norm_cdf(a);
  const double qdivp = 4.0 / pi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + qdivp);
}

/// Inverse-Gaussian(1/z, 1) truncated to (0, kTrunc).
inline double rtigauss(double z, Rng& rng) {
  z = std::fabs(z);
  const double t = kTrunc;
  double x = t + 1.0;
  if (kTruncRecip > z) {  // mu = 1/z > t: rejection from truncated chi-square
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = rng.exponential();
      double e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / t) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      x = 1.0 + e1 * t;
      x = t / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > t) {
      double y = rng.normal();
      y *= y;
      const double half_mu = 0.5 * mu;
      const double mu_y = mu * y;
      x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

}  // namespace pg_detail

/// Exact draw from PG(1, c) via the alternating-series rejection sampler
/// of Devroye / Polson-Scott-Windle.
inline double sample_pg1(double c, Rng& rng) {
  using namespace pg_detail;
  const double z = std::fabs(c) * 0.5;
  const double fz = 0.125 * std::numbers::pi * std::numbers::pi + 0.5 * z * z;
  const double p_right = mass_texpon(z);
  while (true) {
    double x;
    if (rng.uniform() < p_right)
      x = kTrunc + rng.exponential() / fz;
    else
      x = rtigauss(z, rng);
    double s = series_coef(0, x);
    const double y = rng.uniform() * s;
    int n = 0;
    while (true) {
      ++n;
      if (n % 2 == 1) {
        s -= series_coef(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_coef(n, x);
        if (y > s) break;  // reject, propose again
      }
    }
  }
}

/// Count above which PG(b, c) switches to a moment-matched Gaussian.
inline constexpr std::int64_t kPgGaussianThreshold = 170;

inline double pg_mean(double b, double c) {
  if (std::fabs(c) < 1e-4) return b * (0.25 - c * c / 48.0);
  return b * std::tanh(0.5 * c) / (2.0 * c);
}

inline double pg_variance(double b, double c) {
  if (std::fabs(c) < 1e-4) return b * (1.0 / 24.0 - c * c / 120.0);
  const double ch = std::cosh(0.5 * c);
  return b * (std::sinh(c) - c) / (4.0 * c * c * c * ch * ch);
}

/// Draw from PG(b, c) for integer b >= 1: exact sum of b PG(1, c) draws
/// below kPgGaussianThreshold, moment-matched Gaussian above it.
inline double sample_pg(std::int64_t b, double c, Rng& rng) {
  if (b < 1) throw invalid_input("sample_pg: b must be >= 1");
  if (b <= kPgGaussianThreshold) {
    double total = 0.0;
    for (std::int64_t i = 0; i < b; ++i) total += sample_pg1(c, rng);
    return total;
  }
  const double m = pg_mean(static_cast<double>(b), c);
  const double sd = std::sqrt(pg_variance(static_cast<double>(b), c));
  double x;
  do {
    x = m + sd * rng.normal();
  } while (x <= 0.0);
  return x;
}

}  // namespace pgembed
