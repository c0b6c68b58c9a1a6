#pragma once

// Slow, independent reference implementations used to check the library.
// Nothing here calls into the estimators under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss.hpp>

#include "otir/simulation.hpp"
#include "otir/survival.hpp"

namespace oracle {

/// Product-limit P(C >= t) from scratch: for each distinct censoring time
/// u < t, multiply by 1 - (#censored at u) / (#followed to at least u).
inline double censoring_km(std::span<const otir::SubjectRecord> records, double t) {
  std::set<double> censor_times;
  for (const auto& r : records)
    if (!r.event) censor_times.insert(r.followup);
  double s = 1.0;
  for (double u : censor_times) {
    if (!(u < t)) break;
    double at_risk = 0.0;
    double censored = 0.0;
    for (const auto& r : records) {
      if (r.followup >= u) at_risk += 1.0;
      if (!r.event && r.followup == u) censored += 1.0;
    }
    s *= 1.0 - censored / at_risk;
  }
  return s;
}

/// Integrand of W_n at u: product over censoring times v in (a0, u] of
/// 1 / (1 - d(v) / n(v)).
inline double residual_integrand(std::span<const otir::SubjectRecord> records, double a0, double u) {
  std::set<double> censor_times;
  for (const auto& r : records)
    if (!r.event && r.followup > a0 && r.followup <= u) censor_times.insert(r.followup);
  double p = 1.0;
  for (double v : censor_times) {
    double at_risk = 0.0;
    double censored = 0.0;
    for (const auto& r : records) {
      if (r.followup >= v) at_risk += 1.0;
      if (!r.event && r.followup == v) censored += 1.0;
    }
    p /= 1.0 - censored / at_risk;
  }
  return p;
}

/// W_n(t) by Gauss-Legendre quadrature of the step integrand between
/// consecutive observed times (the integrand is constant on each piece).
inline double residual_weight(std::span<const otir::SubjectRecord> records, double a0, double tau,
                              double t) {
  const double upper = std::min(t, tau);
  if (upper <= a0) return 0.0;
  std::vector<double> knots{a0, upper};
  for (const auto& r : records)
    if (r.followup > a0 && r.followup < upper) knots.push_back(r.followup);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    total += boost::math::quadrature::gauss<double, 7>::integrate(
        [&](double u) { return residual_integrand(records, a0, u); }, knots[k], knots[k + 1]);
  }
  return total;
}

inline double transform(double a, double a0, double clamp_rel = 1e-6) {
  const double delta = clamp_rel * a0;
  const double v = std::clamp(a, delta, a0 - delta);
  return boost::math::quantile(boost::math::normal_distribution<double>(), v / a0);
}

inline double gaussian(double u, double h) {
  return std::exp(-0.5 * (u / h) * (u / h)) / (h * std::sqrt(2.0 * M_PI));
}

struct Surface {
  const otir::CohortDataset* data;
  std::vector<double> weights;  // W_n(T~_i) per record
  std::vector<double> h1;
  double h2;
  double a0;
  double tau;
};

inline Surface make_surface(const otir::CohortDataset& data, std::vector<double> h1, double h2) {
  Surface s{&data, {}, std::move(h1), h2, data.window().a0, data.window().tau};
  for (const auto& r : data.records())
    s.weights.push_back(residual_weight(data.records(), s.a0, s.tau, r.followup));
  return s;
}

/// m^(a, x) as a literal double sum over records and covariates.
inline double local_mrl(const Surface& s, double a, std::span<const double> x) {
  const auto& schema = s.data->schema();
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < s.data->size(); ++i) {
    const auto& r = (*s.data)[i];
    if (r.followup < s.a0) continue;
    double k = 1.0;
    std::size_t c = 0;
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (schema[j].kind == otir::CovariateKind::binary) {
        k *= r.covariates[j] == x[j] ? 1.0 : 0.0;
      } else {
        k *= gaussian(r.covariates[j] - x[j], s.h1[c]);
        ++c;
      }
    }
    k *= gaussian(transform(*r.init_time, s.a0) - transform(a, s.a0), s.h2);
    num += s.weights[i] * k;
    den += k;
  }
  return num / std::max(den, 1e-8);
}

inline double logistic_assign(std::span<const double> beta, std::span<const double> x, double a0) {
  double u = beta[0];
  for (std::size_t j = 0; j < x.size(); ++j) u += beta[j + 1] * x[j];
  return a0 / (1.0 + std::exp(-u));
}

/// (1/n) sum_j m^(d(X_j), X_j) for the logistic regime with coefficients beta.
inline double value(const Surface& s, std::span<const double> beta) {
  double total = 0.0;
  for (const auto& r : s.data->records())
    total += local_mrl(s, logistic_assign(beta, r.covariates, s.a0), r.covariates);
  return total / static_cast<double>(s.data->size());
}

/// Random cohort with one binary and `continuous` normal covariates; integer
/// follow-up times (many ties) when `ties` is set.
template <class Rng>
otir::CohortDataset random_cohort(Rng& rng, std::size_t n, bool ties, std::size_t continuous = 1,
                                  double a0 = 3.0, double tau = 30.0) {
  std::vector<otir::Covariate> cov{{"x1", otir::CovariateKind::binary}};
  for (std::size_t c = 0; c < continuous; ++c)
    cov.push_back({"z" + std::to_string(c), otir::CovariateKind::continuous});
  std::vector<otir::SubjectRecord> records;
  while (true) {
    records.clear();
    bool at_risk = false;
    for (std::size_t i = 0; i < n; ++i) {
      otir::SubjectRecord r;
      r.covariates.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
      for (std::size_t c = 0; c < continuous; ++c) r.covariates.push_back(rng.normal());
      double t = rng.uniform(0.05, tau * 1.2);
      if (ties) t = std::ceil(t);
      r.followup = std::min(t, tau);
      r.event = rng.bernoulli(0.6);
      const double a = rng.uniform(0.0, a0);
      if (a <= r.followup) r.init_time = a;
      if (i == 0) {
        // One subject followed to tau keeps every risk set before tau nonempty.
        r.followup = tau;
        r.init_time = rng.uniform(0.0, a0);
      }
      at_risk = at_risk || r.followup >= a0;
      records.push_back(std::move(r));
    }
    if (at_risk) break;
  }
  return otir::validate_cohort(std::move(records), otir::CovariateSchema(std::move(cov)),
                               otir::StudyWindow{a0, tau});
}

}  // namespace oracle
