#pragma once

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace otir {

inline constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343818684758586311649;

inline double normal_pdf(double u) { return inv_sqrt_2pi * std::exp(-0.5 * u * u); }

inline double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

/// Standard normal quantile; p must lie in (0, 1).
inline double normal_quantile(double p) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// Two-sided p-value of a z statistic against N(0, 1).
inline double two_sided_p_value(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

}  // namespace otir
