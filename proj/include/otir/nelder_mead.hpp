#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "otir/error.hpp"

namespace otir {

struct OptimizerConfig {
  double reflection{1.0};
  double expansion{2.0};
  double contraction{0.5};
  double shrink{0.5};
  /// Axis-aligned offset of the initial simplex vertices from the start point.
  double initial_step{0.25};
  /// Stop once max - min objective value over the simplex falls to this.
  double tolerance{1e-8};
  /// 0 selects 500 * dimension.
  std::size_t max_iterations{0};
  /// Empty selects the zero vector.
  std::vector<double> initial_point;

  void validate() const {
    if (!(reflection > 0.0 && expansion > 1.0 && expansion > reflection && contraction > 0.0 &&
          contraction < 1.0 && shrink > 0.0 && shrink < 1.0))
      throw Error(ErrorKind::InvalidArgument, "Nelder-Mead coefficients out of admissible range");
    if (!(tolerance > 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerance must be positive");
    if (!(initial_step != 0.0 && std::isfinite(initial_step)))
      throw Error(ErrorKind::InvalidArgument, "initial simplex step must be nonzero");
  }

  std::size_t iteration_cap(std::size_t dim) const {
    return max_iterations == 0 ? 500 * dim : max_iterations;
  }
};

struct OptimizerResult {
  std::vector<double> argmax;
  double value{};
  std::size_t iterations{};
  std::size_t evaluations{};
  bool converged{};
  /// max - min objective over the final simplex.
  double spread{};
};

/// Maximizes f with the Nelder-Mead simplex method (internally minimizing -f).
/// Deterministic for a deterministic f. Non-finite values met after
/// initialization are treated as the worst possible value.
template <class F>
OptimizerResult nelder_mead(F&& f, std::vector<double> init, const OptimizerConfig& cfg) {
  cfg.validate();
  const std::size_t dim = init.size();
  if (dim == 0) throw Error(ErrorKind::InvalidArgument, "cannot optimize over zero parameters");

  std::size_t evaluations = 0;
  auto cost = [&](const std::vector<double>& x) {
    ++evaluations;
    const double v = f(std::span<const double>(x));
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> simplex(dim + 1, init);
  for (std::size_t k = 0; k < dim; ++k) simplex[k + 1][k] += cfg.initial_step;
  std::vector<double> costs(dim + 1);
  for (std::size_t k = 0; k <= dim; ++k) {
    costs[k] = cost(simplex[k]);
    if (!std::isfinite(costs[k]))
      throw Error(ErrorKind::NonFiniteObjective, "objective is not finite at an initial simplex vertex");
  }

  std::vector<std::size_t> order(dim + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
    std::vector<std::vector<double>> s(dim + 1);
    std::vector<double> c(dim + 1);
    for (std::size_t k = 0; k <= dim; ++k) {
      s[k] = std::move(simplex[order[k]]);
      c[k] = costs[order[k]];
    }
    simplex = std::move(s);
    costs = std::move(c);
  };

  auto affine = [dim](const std::vector<double>& base, const std::vector<double>& toward, double t) {
    std::vector<double> out(dim);
    for (std::size_t j = 0; j < dim; ++j) out[j] = base[j] + t * (toward[j] - base[j]);
    return out;
  };

  const std::size_t cap = cfg.iteration_cap(dim);
  std::size_t iter = 0;
  bool converged = false;
  sort_simplex();
  while (true) {
    const double spread = costs[dim] - costs[0];
    if (spread <= cfg.tolerance) {
      converged = true;
      break;
    }
    if (iter >= cap) break;
    ++iter;

    std::vector<double> centroid(dim, 0.0);
    for (std::size_t k = 0; k < dim; ++k)
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += simplex[k][j];
    for (double& c : centroid) c /= static_cast<double>(dim);

    const auto& worst = simplex[dim];
    auto reflected = affine(centroid, worst, -cfg.reflection);
    const double fr = cost(reflected);

    if (fr < costs[0]) {
      auto expanded = affine(centroid, worst, -cfg.reflection * cfg.expansion);
      const double fe = cost(expanded);
      if (fe < fr) {
        simplex[dim] = std::move(expanded);
        costs[dim] = fe;
      } else {
        simplex[dim] = std::move(reflected);
        costs[dim] = fr;
      }
    } else if (fr < costs[dim - 1]) {
      simplex[dim] = std::move(reflected);
      costs[dim] = fr;
    } else {
      bool accepted = false;
      if (fr < costs[dim]) {
        auto outside = affine(centroid, reflected, cfg.contraction);
        const double fc = cost(outside);
        if (fc <= fr) {
          simplex[dim] = std::move(outside);
          costs[dim] = fc;
          accepted = true;
        }
      } else {
        auto inside = affine(centroid, worst, cfg.contraction);
        const double fc = cost(inside);
        if (fc < costs[dim]) {
          simplex[dim] = std::move(inside);
          costs[dim] = fc;
          accepted = true;
        }
      }
      if (!accepted) {
        for (std::size_t k = 1; k <= dim; ++k) {
          simplex[k] = affine(simplex[0], simplex[k], cfg.shrink);
          costs[k] = cost(simplex[k]);
        }
      }
    }
    sort_simplex();
  }

  OptimizerResult out;
  out.argmax = simplex[0];
  out.value = -costs[0];
  out.iterations = iter;
  out.evaluations = evaluations;
  out.converged = converged;
  out.spread = costs[dim] - costs[0];
  return out;
}

}  // namespace otir
