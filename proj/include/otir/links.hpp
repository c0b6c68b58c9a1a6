#pragma once

// Link functions phi: R -> (0, a0) for parametric regimes, and the time
// transform g: (0, a0) -> R used inside the initiation-time kernel.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "otir/error.hpp"
#include "otir/normal.hpp"

namespace otir {

enum class LinkFamily { logistic, probit };

inline std::string_view to_string(LinkFamily f) {
  return f == LinkFamily::logistic ? "logistic" : "probit";
}

inline LinkFamily parse_link_family(std::string_view s) {
  if (s == "logistic") return LinkFamily::logistic;
  if (s == "probit" || s == "normal") return LinkFamily::probit;
  throw Error(ErrorKind::ParseError, "unknown link family '" + std::string(s) + "'");
}

struct LinkFunction {
  LinkFamily family{LinkFamily::logistic};
  double a0{};

  /// a0 * e^u / (1 + e^u) or a0 * Phi(u).
  double operator()(double u) const {
    if (family == LinkFamily::probit) return a0 * normal_cdf(u);
    if (u >= 0.0) return a0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return a0 * e / (1.0 + e);
  }

  LinkFunction with_window(double new_a0) const { return {family, new_a0}; }
};

/// g(u) = Phi^{-1}(u / a0) with the argument clamped to
/// [clamp_rel * a0, a0 - clamp_rel * a0], so saturated links stay finite.
struct TimeTransform {
  double a0{};
  double clamp_rel{1e-6};

  double clamp_width() const { return clamp_rel * a0; }

  double operator()(double u) const {
    const double lo = clamp_width();
    const double v = std::clamp(u, lo, a0 - lo);
    return normal_quantile(v / a0);
  }

  TimeTransform with_window(double new_a0) const { return {new_a0, clamp_rel}; }
};

inline TimeTransform make_time_transform(double a0, double clamp_rel = 1e-6) {
  if (!(clamp_rel > 0.0 && clamp_rel < 0.5))
    throw Error(ErrorKind::InvalidArgument, "time transform clamp must lie in (0, 0.5)");
  return {a0, clamp_rel};
}

}  // namespace otir
