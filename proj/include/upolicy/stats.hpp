#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace upolicy {

/// Numerically stable logistic function.
template <typename Scalar>
Scalar logistic(Scalar x) {
  if (x >= Scalar(0)) {
    const Scalar e = std::exp(-x);
    return Scalar(1) / (Scalar(1) + e);
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// log(1 + exp(x)) without overflow.
template <typename Scalar>
Scalar log1p_exp(Scalar x) {
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar clamp_probability(Scalar p, Scalar low, Scalar high) {
  return p < low ? low : (p > high ? high : p);
}

double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate far into the tail.
double normal_sf(double x);
/// Inverse standard normal CDF on (0, 1).
double normal_quantile(double p);

/// Upper tail of the chi-squared distribution with one degree of freedom.
double chi2_sf_1dof(double x);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Upper tail P(T > t) of Student's t with `df` degrees of freedom (df may be fractional).
double student_t_sf(double t, double df);

/// Sample quantile with linear interpolation between order statistics (R type 7).
/// `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double q);

}  // namespace upolicy
