#pragma once

// Product kernels over mixed binary/continuous covariates, bandwidth rules,
// kernel density estimation and the local restricted-mean-residual-lifetime
// estimator m^(a, x).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "otir/error.hpp"
#include "otir/links.hpp"
#include "otir/normal.hpp"
#include "otir/survival.hpp"

namespace otir {

/// Empty kernel neighbourhoods floor the m^ denominator at this value.
inline constexpr double kDenominatorFloor = 1e-8;

struct Bandwidths {
  /// One bandwidth per continuous covariate, in schema order.
  std::vector<double> h1;
  /// Bandwidth for g(initiation time).
  double h2{};

  void validate() const {
    for (double h : h1)
      if (!(std::isfinite(h) && h > 0.0))
        throw Error(ErrorKind::InvalidArgument, "bandwidths must be positive and finite");
    if (!(std::isfinite(h2) && h2 > 0.0))
      throw Error(ErrorKind::InvalidArgument, "bandwidths must be positive and finite");
  }

  bool operator==(const Bandwidths&) const = default;
};

/// Gaussian kernel; the only family provided.
struct KernelSpec {
  double normalizer{inv_sqrt_2pi};

  double operator()(double u) const { return normalizer * std::exp(-0.5 * u * u); }
};

/// prod_j (1/h_j) K((xi_j - x_j)/h_j) over continuous coordinates times the
/// indicator that every binary coordinate matches.
inline double covariate_weight(std::span<const double> xi, std::span<const double> x,
                               const Bandwidths& bw, const CovariateSchema& schema,
                               const KernelSpec& k = {}) {
  if (xi.size() != schema.size() || x.size() != schema.size() ||
      bw.h1.size() != schema.continuous_indices().size())
    throw Error(ErrorKind::SchemaMismatch, "covariate vectors or bandwidths do not match schema");
  for (std::size_t j : schema.binary_indices())
    if (xi[j] != x[j]) return 0.0;
  double w = 1.0;
  const auto& cont = schema.continuous_indices();
  for (std::size_t c = 0; c < cont.size(); ++c) {
    const double h = bw.h1[c];
    w *= k((xi[cont[c]] - x[cont[c]]) / h) / h;
  }
  return w;
}

namespace detail {

inline double sample_sd(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0));
}

}  // namespace detail

/// h1_j = gamma1 n^{-1/5} sd(X_j) over all records; h2 = gamma2 n^{-1/5} sd(A)
/// over records with an observed initiation time, on the raw time scale.
inline Bandwidths default_bandwidths(const CohortDataset& dataset, double gamma1, double gamma2) {
  if (!(gamma1 > 0.0 && gamma2 > 0.0))
    throw Error(ErrorKind::InvalidArgument, "bandwidth constants must be positive");
  const std::size_t n = dataset.size();
  if (n < 2) throw Error(ErrorKind::DegenerateVariance, "bandwidth rule needs at least 2 records");
  const double rate = std::pow(static_cast<double>(n), -0.2);

  Bandwidths bw;
  for (std::size_t j : dataset.schema().continuous_indices()) {
    std::vector<double> col;
    col.reserve(n);
    for (const auto& r : dataset.records()) col.push_back(r.covariates[j]);
    const double sd = detail::sample_sd(col);
    if (!(sd > 0.0))
      throw Error(ErrorKind::DegenerateVariance,
                  "covariate '" + dataset.schema()[j].name + "' has zero sample variance");
    bw.h1.push_back(gamma1 * rate * sd);
  }
  std::vector<double> times;
  for (const auto& r : dataset.records())
    if (r.init_time) times.push_back(*r.init_time);
  if (times.size() < 2)
    throw Error(ErrorKind::DegenerateVariance, "need at least 2 observed initiation times");
  const double sd_a = detail::sample_sd(times);
  if (!(sd_a > 0.0))
    throw Error(ErrorKind::DegenerateVariance, "observed initiation times have zero variance");
  bw.h2 = gamma2 * rate * sd_a;
  return bw;
}

/// f^_X(x) = (1/n) sum_i covariate_weight(X_i, x).
inline double density_estimate(const CohortDataset& dataset, std::span<const double> x,
                               const Bandwidths& bw) {
  double sum = 0.0;
  for (const auto& r : dataset.records()) sum += covariate_weight(r.covariates, x, bw, dataset.schema());
  return sum / static_cast<double>(dataset.size());
}

/// m^(a, x): W_n-weighted kernel average of the at-risk subjects near (a, x).
/// Direct O(n) evaluation; LocalMrlSurface is the batched equivalent.
inline double local_mrl(const CohortDataset& dataset, const ResidualWeight& w, double a,
                        std::span<const double> x, const Bandwidths& bw, const TimeTransform& g) {
  const double a0 = dataset.window().a0;
  const double ga = g(a);
  const KernelSpec k;
  double num = 0.0;
  double den = 0.0;
  for (const auto& r : dataset.records()) {
    if (!r.init_time || r.followup < a0) continue;
    const double kx = covariate_weight(r.covariates, x, bw, dataset.schema());
    if (kx == 0.0) continue;
    const double kt = k((g(*r.init_time) - ga) / bw.h2) / bw.h2;
    num += w(r.followup) * kx * kt;
    den += kx * kt;
  }
  return num / std::max(den, kDenominatorFloor);
}

/// m^(a, x_j) for a fixed set of evaluation points x_j and arbitrary times.
/// The covariate kernel weights against the at-risk records are computed once,
/// so each evaluation costs one exp per at-risk record in the point's binary
/// stratum. Immutable after construction; safe to share across threads.
class LocalMrlSurface {
 public:
  LocalMrlSurface(const CohortDataset& dataset, const ResidualWeight& w, const Bandwidths& bw,
                  const TimeTransform& g, std::vector<std::vector<double>> points)
      : points_(std::move(points)), g_(g), h2_(bw.h2) {
    bw.validate();
    const auto& schema = dataset.schema();
    if (bw.h1.size() != schema.continuous_indices().size())
      throw Error(ErrorKind::SchemaMismatch, "bandwidth count does not match continuous covariates");
    const double a0 = dataset.window().a0;

    // At-risk records grouped by binary stratum.
    std::map<std::vector<double>, std::size_t> stratum_of;
    std::vector<std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& r = dataset[i];
      if (!r.init_time || r.followup < a0) continue;
      auto key = binary_key(r.covariates, schema);
      auto [it, inserted] = stratum_of.try_emplace(std::move(key), members.size());
      if (inserted) members.emplace_back();
      members[it->second].push_back(i);
    }

    const KernelSpec k;
    const auto& cont = schema.continuous_indices();
    offsets_.reserve(points_.size() + 1);
    offsets_.push_back(0);
    for (const auto& x : points_) {
      if (x.size() != schema.size())
        throw Error(ErrorKind::SchemaMismatch, "evaluation point does not match schema");
      const auto it = stratum_of.find(binary_key(x, schema));
      if (it != stratum_of.end()) {
        for (std::size_t i : members[it->second]) {
          const auto& r = dataset[i];
          double kx = 1.0;
          for (std::size_t c = 0; c < cont.size(); ++c)
            kx *= k((r.covariates[cont[c]] - x[cont[c]]) / bw.h1[c]) / bw.h1[c];
          if (kx == 0.0) continue;
          weight_.push_back(kx);
          weighted_w_.push_back(kx * w(r.followup));
          g_init_.push_back(g(*r.init_time));
        }
      }
      offsets_.push_back(weight_.size());
    }
  }

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<double>& point(std::size_t j) const { return points_[j]; }

  /// m^(a, point(j)).
  double operator()(std::size_t j, double a) const {
    const double ga = g_(a);
    const double scale = -0.5 / (h2_ * h2_);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = offsets_[j]; i < offsets_[j + 1]; ++i) {
      const double d = g_init_[i] - ga;
      const double e = std::exp(scale * d * d);
      num += weighted_w_[i] * e;
      den += weight_[i] * e;
    }
    const double c = inv_sqrt_2pi / h2_;
    return (c * num) / std::max(c * den, kDenominatorFloor);
  }

 private:
  static std::vector<double> binary_key(std::span<const double> x, const CovariateSchema& schema) {
    std::vector<double> key;
    key.reserve(schema.binary_indices().size());
    for (std::size_t j : schema.binary_indices()) key.push_back(x[j]);
    return key;
  }

  std::vector<std::vector<double>> points_;
  TimeTransform g_;
  double h2_;
  std::vector<std::size_t> offsets_;
  std::vector<double> weight_;
  std::vector<double> weighted_w_;
  std::vector<double> g_init_;
};

}  // namespace otir
