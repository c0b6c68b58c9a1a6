#pragma once

// Regimes (parametric link rules, constant, observed) and the value
// estimators V^(d) and M_n(beta).

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "otir/error.hpp"
#include "otir/gauss_hermite.hpp"
#include "otir/kernel.hpp"
#include "otir/links.hpp"
#include "otir/survival.hpp"

namespace otir {

/// Intercept first: d(x) = phi(beta[0] + sum_j beta[j+1] x_j).
struct RegimeParams {
  std::vector<double> beta;

  double linear_score(std::span<const double> x) const {
    if (beta.size() != x.size() + 1)
      throw Error(ErrorKind::SchemaMismatch,
                  "regime has " + std::to_string(beta.size()) + " coefficients for " +
                      std::to_string(x.size()) + " covariates");
    double s = beta[0];
    for (std::size_t j = 0; j < x.size(); ++j) s += beta[j + 1] * x[j];
    return s;
  }

  bool operator==(const RegimeParams&) const = default;
};

class Regime {
 public:
  struct Parametric {
    LinkFunction link;
    RegimeParams params;
  };
  struct Constant {
    double a;
  };
  struct Observed {};
  using Variant = std::variant<Parametric, Constant, Observed>;

  static Regime parametric(LinkFunction link, std::vector<double> beta) {
    for (double b : beta)
      if (!std::isfinite(b)) throw Error(ErrorKind::InvalidArgument, "regime coefficients must be finite");
    return Regime(Parametric{link, RegimeParams{std::move(beta)}});
  }

  /// Constant initiation time, strictly inside (0, a0).
  static Regime constant(double a, double a0) {
    if (!(a > 0.0 && a < a0))
      throw Error(ErrorKind::InvalidArgument,
                  "constant regime time " + std::to_string(a) + " must lie in (0, a0)");
    return Regime(Constant{a});
  }

  static Regime observed() { return Regime(Observed{}); }

  const Variant& variant() const noexcept { return v_; }
  bool is_observed() const noexcept { return std::holds_alternative<Observed>(v_); }
  bool is_parametric() const noexcept { return std::holds_alternative<Parametric>(v_); }

  double assign(std::span<const double> x) const {
    return std::visit(
        [&](const auto& r) -> double {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, Parametric>)
            return r.link(r.params.linear_score(x));
          else if constexpr (std::is_same_v<T, Constant>)
            return r.a;
          else
            throw Error(ErrorKind::ObservedRegimeNeedsSubject,
                        "the observed regime is only defined per subject");
        },
        v_);
  }

 private:
  explicit Regime(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

inline double regime_assign(const Regime& regime, std::span<const double> x) {
  return regime.assign(x);
}

enum class QuadratureMode { plugin, smoothed };

/// How the outer integral over f^_X is discretised: the empirical plug-in
/// (1/n) sum_i q(X_i), or Gauss-Hermite nodes per continuous covariate around
/// each X_i matching the Gaussian kernel in f^_X.
struct ValueQuadrature {
  QuadratureMode mode{QuadratureMode::plugin};
  std::size_t nodes{10};
};

/// Evaluation points and weights for the outer integral.
struct OuterIntegral {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;
};

inline OuterIntegral outer_integral(const CohortDataset& dataset, const Bandwidths& bw,
                                    const ValueQuadrature& quad) {
  if (quad.nodes == 0) throw Error(ErrorKind::InvalidArgument, "quadrature node count must be >= 1");
  OuterIntegral out;
  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  const auto& cont = dataset.schema().continuous_indices();
  if (quad.mode == QuadratureMode::plugin || cont.empty()) {
    for (const auto& r : dataset.records()) {
      out.points.push_back(r.covariates);
      out.weights.push_back(inv_n);
    }
    return out;
  }
  const NormalQuadrature rule = gauss_hermite_normal(quad.nodes);
  std::size_t combos = 1;
  for (std::size_t c = 0; c < cont.size(); ++c) combos *= rule.nodes.size();
  for (const auto& r : dataset.records()) {
    for (std::size_t combo = 0; combo < combos; ++combo) {
      auto x = r.covariates;
      double weight = inv_n;
      std::size_t rest = combo;
      for (std::size_t c = 0; c < cont.size(); ++c) {
        const std::size_t k = rest % rule.nodes.size();
        rest /= rule.nodes.size();
        x[cont[c]] += bw.h1[c] * rule.nodes[k];
        weight *= rule.weights[k];
      }
      out.points.push_back(std::move(x));
      out.weights.push_back(weight);
    }
  }
  return out;
}

/// V^(d) for parametric and constant regimes on one dataset, and the
/// M_n(beta) closure for a fixed link. Immutable once built; the call
/// operators may run concurrently.
class ValueObjective {
 public:
  ValueObjective(const CohortDataset& dataset, LinkFunction link, const TimeTransform& g,
                 const Bandwidths& bw, const ResidualWeight& w, const ValueQuadrature& quad)
      : link_(link), weights_(), surface_(nullptr) {
    auto outer = outer_integral(dataset, bw, quad);
    weights_ = std::move(outer.weights);
    surface_ = std::make_shared<const LocalMrlSurface>(dataset, w, bw, g, std::move(outer.points));
  }

  /// M_n(beta).
  double operator()(std::span<const double> beta) const {
    const RegimeParams params{std::vector<double>(beta.begin(), beta.end())};
    double total = 0.0;
    for (std::size_t j = 0; j < surface_->size(); ++j) {
      const double a = link_(params.linear_score(surface_->point(j)));
      total += weights_[j] * (*surface_)(j, a);
    }
    return total;
  }

  double value(const Regime& regime) const {
    if (regime.is_observed())
      throw Error(ErrorKind::ObservedRegimeNeedsSubject,
                  "use observed_regime_value for the observed regime");
    double total = 0.0;
    for (std::size_t j = 0; j < surface_->size(); ++j)
      total += weights_[j] * (*surface_)(j, regime.assign(surface_->point(j)));
    return total;
  }

  /// Weighted sum of m^(times[j], point j); one time per evaluation point.
  double value_of_assignments(std::span<const double> times) const {
    if (times.size() != surface_->size())
      throw Error(ErrorKind::InvalidArgument, "one assigned time per evaluation point required");
    double total = 0.0;
    for (std::size_t j = 0; j < surface_->size(); ++j) total += weights_[j] * (*surface_)(j, times[j]);
    return total;
  }

  const LocalMrlSurface& surface() const { return *surface_; }
  const LinkFunction& link() const noexcept { return link_; }

 private:
  LinkFunction link_;
  std::vector<double> weights_;
  std::shared_ptr<const LocalMrlSurface> surface_;
};

inline ValueObjective objective(const CohortDataset& dataset, LinkFunction link,
                                const TimeTransform& g, const Bandwidths& bw,
                                const ResidualWeight& w, const ValueQuadrature& quad = {}) {
  return ValueObjective(dataset, link, g, bw, w, quad);
}

inline double value_estimate(const CohortDataset& dataset, const Regime& regime,
                             const Bandwidths& bw, const ResidualWeight& w,
                             const TimeTransform& g, const ValueQuadrature& quad = {}) {
  if (regime.is_observed())
    throw Error(ErrorKind::ObservedRegimeNeedsSubject,
                "use observed_regime_value for the observed regime");
  const LinkFunction link = regime.is_parametric()
                                ? std::get<Regime::Parametric>(regime.variant()).link
                                : LinkFunction{LinkFamily::logistic, dataset.window().a0};
  return ValueObjective(dataset, link, g, bw, w, quad).value(regime);
}

/// m^(A_i, X_i) for every record with an observed initiation, in record order.
inline std::vector<double> observed_mrl(const CohortDataset& dataset, const Bandwidths& bw,
                                        const ResidualWeight& w, const TimeTransform& g) {
  std::vector<std::vector<double>> points;
  std::vector<double> times;
  for (const auto& r : dataset.records()) {
    if (!r.init_time) continue;
    points.push_back(r.covariates);
    times.push_back(*r.init_time);
  }
  if (points.empty())
    throw Error(ErrorKind::NoObservedInitiations, "no record has an observed initiation time");
  const LocalMrlSurface surface(dataset, w, bw, g, std::move(points));
  std::vector<double> out(times.size());
  for (std::size_t j = 0; j < times.size(); ++j) out[j] = surface(j, times[j]);
  return out;
}

/// (1/n_obs) sum over observed initiations of m^(A_i, X_i).
inline double observed_regime_value(const CohortDataset& dataset, const Bandwidths& bw,
                                    const ResidualWeight& w, const TimeTransform& g) {
  const auto m = observed_mrl(dataset, bw, w, g);
  double total = 0.0;
  for (double v : m) total += v;
  return total / static_cast<double>(m.size());
}

/// value_estimate for parametric/constant regimes, observed_regime_value for
/// the observed one.
inline double regime_value(const CohortDataset& dataset, const Regime& regime, const Bandwidths& bw,
                           const ResidualWeight& w, const TimeTransform& g,
                           const ValueQuadrature& quad = {}) {
  if (regime.is_observed()) return observed_regime_value(dataset, bw, w, g);
  return value_estimate(dataset, regime, bw, w, g, quad);
}

}  // namespace otir
