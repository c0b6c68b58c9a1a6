#pragma once

// Bootstrap standard errors and confidence intervals, regime value
// comparisons, and the individual-improvement (PI) metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "otir/error.hpp"
#include "otir/fit.hpp"
#include "otir/kernel.hpp"
#include "otir/normal.hpp"
#include "otir/parallel.hpp"
#include "otir/regime.hpp"
#include "otir/rng.hpp"
#include "otir/survival.hpp"

namespace otir {

struct BootstrapConfig {
  std::size_t replicates{500};
  std::uint64_t seed{1};
  unsigned threads{1};
};

struct Interval {
  double lower{};
  double upper{};

  bool contains(double v) const { return lower <= v && v <= upper; }
};

/// Type-7 (linear interpolation) sample quantile.
inline double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline Interval quantile_interval(const std::vector<double>& values, double level = 0.95) {
  const double tail = 0.5 * (1.0 - level);
  return {quantile(values, tail), quantile(values, 1.0 - tail)};
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
inline double sample_sd(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

inline double mean_of(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

/// Positions drawn with replacement for bootstrap replicate `replicate`.
inline std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t master_seed,
                                                  std::size_t replicate) {
  RandomStream rng(derive_seed(master_seed, replicate));
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.index(n);
  return idx;
}

/// Whether a replicate failure is a property of the resample (excluded and
/// counted) rather than a configuration error (propagated).
inline bool is_resample_failure(const Error& e) {
  return e.kind() == ErrorKind::EmptyRiskSet || e.kind() == ErrorKind::DegenerateCensoring ||
         e.kind() == ErrorKind::DegenerateVariance;
}

struct BootstrapSummary {
  FitResult point;
  /// Successful replicates only, in replicate order.
  std::vector<std::vector<double>> beta_replicates;
  std::vector<double> value_replicates;
  std::vector<std::size_t> replicate_ids;
  std::vector<double> se_beta;
  /// beta_hat_j +- z_{0.975} se_j.
  std::vector<Interval> ci_beta;
  /// Empirical 2.5% / 97.5% quantiles of value_replicates.
  Interval ci_value;
  double se_value{};
  std::size_t failed_replicates{};
};

inline BootstrapSummary bootstrap_fit(const CohortDataset& dataset, const LinkFunction& link,
                                      const TimeTransform& g, const ValueQuadrature& quad,
                                      const BandwidthRule& bw_rule, const OptimizerConfig& opt,
                                      const BootstrapConfig& cfg) {
  if (cfg.replicates < 2) throw Error(ErrorKind::InvalidArgument, "bootstrap needs B >= 2");
  BootstrapSummary out;
  out.point = fit_otir(dataset, link, g, resolve_bandwidths(bw_rule, dataset), quad, opt);

  std::vector<std::optional<FitResult>> fits(cfg.replicates);
  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    try {
      const auto sample = dataset.select(bootstrap_indices(dataset.size(), cfg.seed, r));
      fits[r] = fit_otir(sample, link, g, resolve_bandwidths(bw_rule, sample), quad, opt);
    } catch (const Error& e) {
      if (!is_resample_failure(e)) throw;
    }
  });

  for (std::size_t r = 0; r < fits.size(); ++r) {
    if (!fits[r]) {
      ++out.failed_replicates;
      continue;
    }
    out.beta_replicates.push_back(fits[r]->beta_hat.beta);
    out.value_replicates.push_back(fits[r]->value_hat);
    out.replicate_ids.push_back(r);
  }
  if (2 * out.failed_replicates > cfg.replicates || out.value_replicates.size() < 2)
    throw Error(ErrorKind::TooManyFailures,
                std::to_string(out.failed_replicates) + " of " + std::to_string(cfg.replicates) +
                    " bootstrap replicates failed");

  const std::size_t dim = out.point.beta_hat.beta.size();
  const double z = normal_quantile(0.975);
  for (std::size_t j = 0; j < dim; ++j) {
    std::vector<double> col;
    col.reserve(out.beta_replicates.size());
    for (const auto& b : out.beta_replicates) col.push_back(b[j]);
    const double se = sample_sd(col);
    const double est = out.point.beta_hat.beta[j];
    out.se_beta.push_back(se);
    out.ci_beta.push_back({est - z * se, est + z * se});
  }
  out.ci_value = quantile_interval(out.value_replicates);
  out.se_value = sample_sd(out.value_replicates);
  return out;
}

/// A regime to compare. Parametric regimes with `refit` set are re-estimated
/// on every bootstrap sample (starting from the optimizer's configured point)
/// and valued at their refitted optimum.
struct RegimeSpec {
  Regime regime;
  bool refit{false};
};

struct BootstrapValues {
  /// Full-data value per regime.
  std::vector<double> point;
  /// replicates[k][r]: value of regime r in the k-th successful replicate.
  std::vector<std::vector<double>> replicates;
  std::vector<std::size_t> replicate_ids;
  std::size_t failed_replicates{};
};

inline double spec_value(const CohortDataset& data, const RegimeSpec& spec, const Bandwidths& bw,
                         const ResidualWeight& w, const TimeTransform& g,
                         const ValueQuadrature& quad, const OptimizerConfig& opt, bool resampled) {
  if (resampled && spec.refit && spec.regime.is_parametric()) {
    const auto& link = std::get<Regime::Parametric>(spec.regime.variant()).link;
    return fit_otir(data, link, g, bw, quad, opt).value_hat;
  }
  return regime_value(data, spec.regime, bw, w, g, quad);
}

/// Values of several regimes on the full data and on shared bootstrap
/// resamples, so per-replicate differences are paired.
inline BootstrapValues bootstrap_regime_values(const CohortDataset& dataset,
                                               std::span<const RegimeSpec> regimes,
                                               const TimeTransform& g, const ValueQuadrature& quad,
                                               const BandwidthRule& bw_rule,
                                               const OptimizerConfig& opt,
                                               const BootstrapConfig& cfg) {
  if (cfg.replicates < 2) throw Error(ErrorKind::InvalidArgument, "bootstrap needs B >= 2");
  BootstrapValues out;
  {
    const Bandwidths bw = resolve_bandwidths(bw_rule, dataset);
    const ResidualWeight w = build_residual_weight(dataset);
    for (const auto& spec : regimes)
      out.point.push_back(spec_value(dataset, spec, bw, w, g, quad, opt, false));
  }

  std::vector<std::optional<std::vector<double>>> values(cfg.replicates);
  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    try {
      const auto sample = dataset.select(bootstrap_indices(dataset.size(), cfg.seed, r));
      const Bandwidths bw = resolve_bandwidths(bw_rule, sample);
      const ResidualWeight w = build_residual_weight(sample);
      std::vector<double> v;
      for (const auto& spec : regimes) v.push_back(spec_value(sample, spec, bw, w, g, quad, opt, true));
      values[r] = std::move(v);
    } catch (const Error& e) {
      if (!is_resample_failure(e) && e.kind() != ErrorKind::NoObservedInitiations) throw;
    }
  });
  for (std::size_t r = 0; r < values.size(); ++r) {
    if (!values[r]) {
      ++out.failed_replicates;
      continue;
    }
    out.replicates.push_back(std::move(*values[r]));
    out.replicate_ids.push_back(r);
  }
  if (2 * out.failed_replicates > cfg.replicates || out.replicates.size() < 2)
    throw Error(ErrorKind::TooManyFailures,
                std::to_string(out.failed_replicates) + " of " + std::to_string(cfg.replicates) +
                    " bootstrap replicates failed");
  return out;
}

struct ValueDifference {
  double point{};
  Interval ci;
  std::vector<double> replicates;
  std::size_t failed_replicates{};
};

/// Paired difference of two bootstrap value columns.
inline ValueDifference paired_difference(const BootstrapValues& values, std::size_t a,
                                         std::size_t b) {
  ValueDifference d;
  d.point = values.point[a] - values.point[b];
  for (const auto& rep : values.replicates) d.replicates.push_back(rep[a] - rep[b]);
  d.ci = quantile_interval(d.replicates);
  d.failed_replicates = values.failed_replicates;
  return d;
}

/// V^(a) - V^(b) with a quantile bootstrap interval. A parametric regime_a is
/// re-estimated on every resample; regime_b is re-evaluated as given.
inline ValueDifference value_difference_ci(const CohortDataset& dataset, const Regime& regime_a,
                                           const Regime& regime_b, const TimeTransform& g,
                                           const ValueQuadrature& quad,
                                           const BandwidthRule& bw_rule,
                                           const OptimizerConfig& opt, const BootstrapConfig& cfg) {
  const RegimeSpec specs[] = {{regime_a, regime_a.is_parametric()}, {regime_b, false}};
  return paired_difference(bootstrap_regime_values(dataset, specs, g, quad, bw_rule, opt, cfg), 0, 1);
}

/// Share of subjects with an observed initiation whose estimated outcome
/// improves strictly: m^(d(X_i), X_i) > m^(A_i, X_i).
inline double improvement_fraction(const CohortDataset& dataset, const Regime& regime,
                                   const Bandwidths& bw, const ResidualWeight& w,
                                   const TimeTransform& g) {
  std::vector<std::vector<double>> points;
  std::vector<double> observed;
  for (const auto& r : dataset.records()) {
    if (!r.init_time) continue;
    points.push_back(r.covariates);
    observed.push_back(*r.init_time);
  }
  if (points.empty())
    throw Error(ErrorKind::NoObservedInitiations, "no record has an observed initiation time");
  if (regime.is_observed()) return 0.0;
  const LocalMrlSurface surface(dataset, w, bw, g, std::move(points));
  std::size_t improved = 0;
  for (std::size_t j = 0; j < observed.size(); ++j)
    if (surface(j, regime.assign(surface.point(j))) > surface(j, observed[j])) ++improved;
  return static_cast<double>(improved) / static_cast<double>(observed.size());
}

/// argmax_a V^(constant a): uniform grid on [clamp, a0 - clamp], then
/// golden-section search on the bracket around the best grid point. The
/// refined point replaces the grid point only if strictly better, so ties
/// resolve to the smallest a.
inline Regime optimal_constant_regime(const CohortDataset& dataset, const Bandwidths& bw,
                                      const ResidualWeight& w, const TimeTransform& g,
                                      std::size_t grid_points = 200,
                                      const ValueQuadrature& quad = {}) {
  if (grid_points < 2) throw Error(ErrorKind::InvalidArgument, "constant regime grid needs >= 2 points");
  const double a0 = dataset.window().a0;
  const ValueObjective v(dataset, LinkFunction{LinkFamily::logistic, a0}, g, bw, w, quad);
  std::vector<double> times(v.surface().size());
  auto value_at = [&](double a) {
    std::fill(times.begin(), times.end(), a);
    return v.value_of_assignments(times);
  };

  const double lo = g.clamp_width();
  const double hi = a0 - lo;
  const double step = (hi - lo) / static_cast<double>(grid_points - 1);
  std::size_t best_k = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid_points; ++k) {
    const double val = value_at(lo + step * static_cast<double>(k));
    if (val > best) {
      best = val;
      best_k = k;
    }
  }
  double best_a = lo + step * static_cast<double>(best_k);

  double left = best_k == 0 ? lo : best_a - step;
  double right = best_k + 1 == grid_points ? hi : best_a + step;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = right - inv_phi * (right - left);
  double d = left + inv_phi * (right - left);
  double fc = value_at(c);
  double fd = value_at(d);
  while (right - left > 1e-9 * a0) {
    if (fc >= fd) {
      right = d;
      d = c;
      fd = fc;
      c = right - inv_phi * (right - left);
      fc = value_at(c);
    } else {
      left = c;
      c = d;
      fc = fd;
      d = left + inv_phi * (right - left);
      fd = value_at(d);
    }
  }
  const double refined = 0.5 * (left + right);
  if (value_at(refined) > best) best_a = refined;
  return Regime::constant(best_a, a0);
}

}  // namespace otir
