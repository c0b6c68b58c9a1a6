#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "otir/error.hpp"

namespace otir {

/// Nodes and weights for E[f(Z)], Z ~ N(0, 1): sum_k weights[k] * f(nodes[k]).
struct NormalQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Hermite rule for weight exp(-t^2), found by Newton iteration on the
/// orthonormal Hermite recurrence, then rescaled to the standard normal.
inline NormalQuadrature gauss_hermite_normal(std::size_t count) {
  if (count == 0) throw Error(ErrorKind::InvalidArgument, "quadrature needs at least one node");
  const auto n = static_cast<int>(count);
  const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
  std::vector<double> t(count), w(count);
  const int half = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    // Asymptotic starting guesses for the largest roots, then extrapolation
    // from the previously found roots.
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * t[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * t[1];
    else
      z = 2.0 * z - t[static_cast<std::size_t>(i - 2)];

    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double step = p1 / pp;
      z -= step;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    t[lo] = z;
    t[hi] = -z;
    w[lo] = 2.0 / (pp * pp);
    w[hi] = w[lo];
  }
  if (n % 2 == 1) t[static_cast<std::size_t>(n / 2)] = 0.0;

  NormalQuadrature rule;
  rule.nodes.resize(count);
  rule.weights.resize(count);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  // Ascending node order.
  for (std::size_t k = 0; k < count; ++k) {
    rule.nodes[k] = std::numbers::sqrt2 * t[count - 1 - k];
    rule.weights[k] = w[count - 1 - k] * inv_sqrt_pi;
  }
  return rule;
}

}  // namespace otir
