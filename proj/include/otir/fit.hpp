#pragma once

// Maximization of M_n(beta), cross-validated bandwidth constants and the
// refined regime for subjects whose fitted initiation time falls below a1.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "otir/error.hpp"
#include "otir/kernel.hpp"
#include "otir/links.hpp"
#include "otir/nelder_mead.hpp"
#include "otir/parallel.hpp"
#include "otir/regime.hpp"
#include "otir/rng.hpp"
#include "otir/survival.hpp"

namespace otir {

struct FitResult {
  LinkFunction link;
  RegimeParams beta_hat;
  /// M_n(beta_hat), recomputed at the returned point.
  double value_hat{};
  std::size_t iterations{};
  std::size_t evaluations{};
  bool converged{};
  double spread{};

  Regime regime() const { return Regime::parametric(link, beta_hat.beta); }
};

/// gamma constants of the n^{-1/5} sd rule.
struct BandwidthConstants {
  double gamma1{1.0};
  double gamma2{1.0};
};

/// Either fixed bandwidths or constants re-applied to each dataset.
using BandwidthRule = std::variant<BandwidthConstants, Bandwidths>;

inline Bandwidths resolve_bandwidths(const BandwidthRule& rule, const CohortDataset& dataset) {
  if (const auto* fixed = std::get_if<Bandwidths>(&rule)) return *fixed;
  const auto& c = std::get<BandwidthConstants>(rule);
  return default_bandwidths(dataset, c.gamma1, c.gamma2);
}

/// Kaplan-Meier censoring survival and W_n for one dataset.
inline ResidualWeight build_residual_weight(const CohortDataset& dataset) {
  return residual_weight(censoring_km(dataset), dataset.window());
}

inline FitResult fit_otir(const CohortDataset& dataset, const LinkFunction& link,
                          const TimeTransform& g, const Bandwidths& bw,
                          const ValueQuadrature& quad = {}, const OptimizerConfig& cfg = {}) {
  const std::size_t dim = dataset.schema().size() + 1;
  std::vector<double> init = cfg.initial_point.empty() ? std::vector<double>(dim, 0.0) : cfg.initial_point;
  if (init.size() != dim)
    throw Error(ErrorKind::SchemaMismatch, "initial point must have p + 1 entries");
  const ResidualWeight w = build_residual_weight(dataset);
  const ValueObjective mn = objective(dataset, link, g, bw, w, quad);
  const OptimizerResult opt = nelder_mead(mn, std::move(init), cfg);

  FitResult fit;
  fit.link = link;
  fit.beta_hat = RegimeParams{opt.argmax};
  fit.value_hat = mn(opt.argmax);
  fit.iterations = opt.iterations;
  fit.evaluations = opt.evaluations;
  fit.converged = opt.converged;
  fit.spread = opt.spread;
  return fit;
}

// ---------------------------------------------------------------------------
// Cross-validation of (gamma1, gamma2)

struct CvConfig {
  std::size_t folds{5};
  std::vector<BandwidthConstants> grid{default_grid()};
  std::uint64_t seed{1};
  unsigned threads{1};

  static std::vector<BandwidthConstants> default_grid() {
    const double levels[] = {0.5, 0.75, 1.0, 1.5, 2.0};
    std::vector<BandwidthConstants> g;
    for (double a : levels)
      for (double b : levels) g.push_back({a, b});
    return g;
  }
};

struct CvCell {
  double gamma1{};
  double gamma2{};
  /// Mean held-out value over folds.
  double score{};
  std::vector<double> fold_scores;
};

struct CvResult {
  double gamma1{};
  double gamma2{};
  /// One row per grid pair, sorted by (gamma1, gamma2).
  std::vector<CvCell> table;
};

/// Record positions sorted by a content key, so anything derived from this
/// order is invariant to how the input happened to be ordered.
inline std::vector<std::size_t> canonical_order(const CohortDataset& dataset) {
  std::vector<std::size_t> idx(dataset.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = dataset[a];
    const auto& rb = dataset[b];
    return std::tie(ra.followup, ra.event, ra.init_time, ra.covariates) <
           std::tie(rb.followup, rb.event, rb.init_time, rb.covariates);
  });
  return idx;
}

/// Fold membership (0..K-1) per record position.
inline std::vector<std::size_t> assign_folds(const CohortDataset& dataset, std::size_t folds,
                                             std::uint64_t seed) {
  auto order = canonical_order(dataset);
  RandomStream rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  std::vector<std::size_t> fold_of(dataset.size());
  const std::size_t n = order.size();
  for (std::size_t pos = 0; pos < n; ++pos) fold_of[order[pos]] = pos * folds / n;
  return fold_of;
}

inline CvResult cv_bandwidth(const CohortDataset& dataset, const LinkFunction& link,
                             const TimeTransform& g, const ValueQuadrature& quad,
                             const CvConfig& cv, const OptimizerConfig& opt = {}) {
  if (cv.folds < 2) throw Error(ErrorKind::InvalidArgument, "cross-validation needs K >= 2");
  if (cv.grid.empty()) throw Error(ErrorKind::InvalidArgument, "cross-validation grid is empty");
  if (dataset.size() < 2 * cv.folds)
    throw Error(ErrorKind::FoldTooSmall, "need at least 2K records for K-fold cross-validation");

  const auto fold_of = assign_folds(dataset, cv.folds, cv.seed);
  const auto canonical = canonical_order(dataset);
  std::vector<CohortDataset> held_out;
  std::vector<CohortDataset> training;
  for (std::size_t k = 0; k < cv.folds; ++k) {
    std::vector<std::size_t> in, out;
    for (std::size_t i : canonical) (fold_of[i] == k ? in : out).push_back(i);
    try {
      held_out.push_back(dataset.select(in));
      training.push_back(dataset.select(out));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyRiskSet) throw;
      throw Error(ErrorKind::FoldTooSmall,
                  "fold " + std::to_string(k) + " has no record followed past a0");
    }
  }

  std::vector<BandwidthConstants> grid = cv.grid;
  std::sort(grid.begin(), grid.end(), [](const auto& a, const auto& b) {
    return std::tie(a.gamma1, a.gamma2) < std::tie(b.gamma1, b.gamma2);
  });

  std::vector<double> scores(grid.size() * cv.folds);
  parallel_for(scores.size(), cv.threads, [&](std::size_t cell) {
    const auto& gammas = grid[cell / cv.folds];
    const std::size_t k = cell % cv.folds;
    const Bandwidths bw_train = default_bandwidths(training[k], gammas.gamma1, gammas.gamma2);
    const FitResult fit = fit_otir(training[k], link, g, bw_train, quad, opt);
    const Bandwidths bw_fold = default_bandwidths(held_out[k], gammas.gamma1, gammas.gamma2);
    scores[cell] = value_estimate(held_out[k], fit.regime(), bw_fold,
                                  build_residual_weight(held_out[k]), g, quad);
  });

  CvResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < grid.size(); ++c) {
    CvCell cell{grid[c].gamma1, grid[c].gamma2, 0.0, {}};
    for (std::size_t k = 0; k < cv.folds; ++k) {
      cell.fold_scores.push_back(scores[c * cv.folds + k]);
      cell.score += scores[c * cv.folds + k];
    }
    cell.score /= static_cast<double>(cv.folds);
    if (cell.score > best) {
      best = cell.score;
      result.gamma1 = cell.gamma1;
      result.gamma2 = cell.gamma2;
    }
    result.table.push_back(std::move(cell));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Refined regime for subjects assigned early initiation

struct RefinedFit {
  /// Positions i with d^(X_i) < a1.
  std::vector<std::size_t> subset_ids;
  /// Positions that enter the refit cohort on the window [0, a1].
  std::vector<std::size_t> cohort_ids;
  StudyWindow window;
  FitResult fit;
};

/// Refits on S = {i : d^(X_i) < a1} with a0 replaced by a1. Within [0, a1] a
/// subject whose initiation time exceeds a1 cannot follow any regime of the
/// new class, so records with an observed initiation above a1, and
/// unobserved ones followed to a1 or beyond, leave the refit cohort.
inline RefinedFit refined_critical_fit(const CohortDataset& dataset, const FitResult& first_fit,
                                       const LinkFunction& link, const TimeTransform& g, double a1,
                                       const BandwidthConstants& gammas = {},
                                       const ValueQuadrature& quad = {},
                                       const OptimizerConfig& opt = {}) {
  const StudyWindow& win = dataset.window();
  if (!(a1 > 0.0 && a1 <= win.a0))
    throw Error(ErrorKind::InvalidArgument, "refinement threshold a1 must lie in (0, a0]");

  RefinedFit out;
  const Regime first = first_fit.regime();
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (first.assign(dataset[i].covariates) < a1) out.subset_ids.push_back(i);
  if (out.subset_ids.empty())
    throw Error(ErrorKind::EmptyCriticalSubset, "no subject has a fitted initiation time below a1");

  std::vector<SubjectRecord> kept;
  for (std::size_t i : out.subset_ids) {
    const auto& r = dataset[i];
    const bool admissible = r.init_time ? *r.init_time <= a1 : r.followup < a1;
    if (!admissible) continue;
    out.cohort_ids.push_back(i);
    kept.push_back(r);
  }
  if (kept.empty())
    throw Error(ErrorKind::EmptyCriticalSubset, "no subject in the critical subset fits the window [0, a1]");

  out.window = StudyWindow{a1, win.tau};
  const CohortDataset refit = validate_cohort(std::move(kept), dataset.schema(), out.window);
  const Bandwidths bw = default_bandwidths(refit, gammas.gamma1, gammas.gamma2);
  out.fit = fit_otir(refit, link.with_window(a1), g.with_window(a1), bw, quad, opt);
  return out;
}

}  // namespace otir
