#pragma once

#include <cmath>

namespace markovshift {

inline double normal_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

/// log of the upper tail 1 - Phi(x), stable for large x.
inline double normal_log_sf(double x) {
  if (x < 30.0) return std::log(0.5 * std::erfc(x * 0.7071067811865475244));
  // asymptotic expansion of Mills ratio
  double x2 = x * x;
  return -0.5 * x2 - std::log(x) - 0.9189385332046727 +
         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

/// Inverse standard normal CDF (Acklam's rational approximation refined by
/// one Halley step; accurate to ~1e-15 on (0,1)).
inline double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, x;
  if (p <= 0.0) return -INFINITY;
  if (p >= 1.0) return INFINITY;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement
  double e = normal_cdf(x) - p;
  double u = e / normal_pdf(x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

/// Antiderivative of Phi: integral of Phi(t) dt = t*Phi(t) + phi(t).
inline double normal_cdf_antiderivative(double x) {
  return x * normal_cdf(x) + normal_pdf(x);
}

}  // namespace markovshift
