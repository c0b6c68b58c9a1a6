#pragma once

// Censored treatment-initiation cohorts, the censoring-time Kaplan-Meier
// estimator and the residual-lifetime weight W_n.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "otir/error.hpp"

namespace otir {

/// Initiation window [0, a0] and follow-up horizon tau, 0 < a0 < tau.
struct StudyWindow {
  double a0{};
  double tau{};

  static StudyWindow make(double a0, double tau) {
    if (!(std::isfinite(a0) && std::isfinite(tau) && a0 > 0.0 && a0 < tau))
      throw Error(ErrorKind::InvalidArgument,
                  "study window requires 0 < a0 < tau, got a0=" + std::to_string(a0) +
                      " tau=" + std::to_string(tau));
    return StudyWindow{a0, tau};
  }

  bool operator==(const StudyWindow&) const = default;
};

enum class CovariateKind { binary, continuous };

struct Covariate {
  std::string name;
  CovariateKind kind{CovariateKind::continuous};

  bool operator==(const Covariate&) const = default;
};

class CovariateSchema {
 public:
  CovariateSchema() = default;

  explicit CovariateSchema(std::vector<Covariate> entries) : entries_(std::move(entries)) {
    if (entries_.empty())
      throw Error(ErrorKind::InvalidArgument, "covariate schema needs at least one entry");
    std::unordered_set<std::string> seen;
    for (std::size_t j = 0; j < entries_.size(); ++j) {
      if (!seen.insert(entries_[j].name).second)
        throw Error(ErrorKind::InvalidArgument, "duplicate covariate name '" + entries_[j].name + "'");
      if (entries_[j].kind == CovariateKind::continuous)
        continuous_.push_back(j);
      else
        binary_.push_back(j);
    }
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const Covariate& operator[](std::size_t j) const { return entries_[j]; }
  const std::vector<Covariate>& entries() const noexcept { return entries_; }

  /// Positions of continuous covariates, in schema order. Bandwidth vectors
  /// are indexed in this order.
  const std::vector<std::size_t>& continuous_indices() const noexcept { return continuous_; }
  const std::vector<std::size_t>& binary_indices() const noexcept { return binary_; }

  bool operator==(const CovariateSchema& other) const { return entries_ == other.entries_; }

 private:
  std::vector<Covariate> entries_;
  std::vector<std::size_t> continuous_;
  std::vector<std::size_t> binary_;
};

/// One subject: (X, A, T~, Delta). An unobserved initiation is std::nullopt.
struct SubjectRecord {
  std::vector<double> covariates;
  std::optional<double> init_time;
  double followup{};
  bool event{};

  bool operator==(const SubjectRecord&) const = default;
};

class CohortDataset;
inline CohortDataset validate_cohort(std::vector<SubjectRecord> raw_records,
                                     CovariateSchema schema, StudyWindow window);

/// A validated cohort. Only obtainable through validate_cohort, so every
/// instance satisfies the record invariants against its window.
class CohortDataset {
 public:
  const CovariateSchema& schema() const noexcept { return schema_; }
  const StudyWindow& window() const noexcept { return window_; }
  const std::vector<SubjectRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const SubjectRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Records at the given positions (repeats allowed), revalidated.
  CohortDataset select(std::span<const std::size_t> indices) const {
    std::vector<SubjectRecord> picked;
    picked.reserve(indices.size());
    for (std::size_t i : indices) picked.push_back(records_.at(i));
    return validate_cohort(std::move(picked), schema_, window_);
  }

 private:
  friend CohortDataset validate_cohort(std::vector<SubjectRecord>, CovariateSchema, StudyWindow);

  CohortDataset(CovariateSchema schema, StudyWindow window, std::vector<SubjectRecord> records)
      : schema_(std::move(schema)), window_(window), records_(std::move(records)) {}

  CovariateSchema schema_;
  StudyWindow window_;
  std::vector<SubjectRecord> records_;
};

inline void validate_record(const SubjectRecord& r, const CovariateSchema& schema,
                            const StudyWindow& window, std::size_t row) {
  if (r.covariates.size() != schema.size())
    throw Error(ErrorKind::SchemaMismatch,
                "expected " + std::to_string(schema.size()) + " covariates, got " +
                    std::to_string(r.covariates.size()),
                row);
  if (!std::isfinite(r.followup) || r.followup <= 0.0)
    throw Error(ErrorKind::NonPositiveTime, "follow-up time must be positive and finite", row);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const double v = r.covariates[j];
    if (schema[j].kind == CovariateKind::binary) {
      if (v != 0.0 && v != 1.0)
        throw Error(ErrorKind::BinaryOutOfRange,
                    "binary covariate '" + schema[j].name + "' must be 0 or 1", row);
    } else if (!std::isfinite(v)) {
      throw Error(ErrorKind::SchemaMismatch,
                  "continuous covariate '" + schema[j].name + "' is not finite", row);
    }
  }
  if (r.init_time) {
    const double a = *r.init_time;
    if (std::isfinite(a) && a > r.followup)
      throw Error(ErrorKind::InitiationAfterFollowup, "initiation time exceeds follow-up time", row);
    if (!std::isfinite(a) || a < 0.0 || a > window.a0)
      throw Error(ErrorKind::InitiationOutsideWindow, "initiation time outside [0, a0]", row);
  } else if (r.followup >= window.a0) {
    throw Error(ErrorKind::MissingInitiation,
                "subject followed past a0 must have an observed initiation time", row);
  }
}

/// Validates every record against the schema and window; records keep their
/// input order. Errors carry the 0-based index of the offending record.
inline CohortDataset validate_cohort(std::vector<SubjectRecord> raw_records, CovariateSchema schema,
                                     StudyWindow window) {
  StudyWindow::make(window.a0, window.tau);
  if (schema.size() == 0)
    throw Error(ErrorKind::InvalidArgument, "covariate schema needs at least one entry");
  bool any_at_risk = false;
  for (std::size_t i = 0; i < raw_records.size(); ++i) {
    validate_record(raw_records[i], schema, window, i);
    any_at_risk = any_at_risk || raw_records[i].followup >= window.a0;
  }
  if (!any_at_risk)
    throw Error(ErrorKind::EmptyRiskSet, "no record has follow-up time >= a0");
  return CohortDataset(std::move(schema), window, std::move(raw_records));
}

/// Kaplan-Meier estimate of S_C(t) = P(C >= t), left-continuous: the product
/// runs over censoring jump times strictly below t.
struct CensoringSurvival {
  std::vector<double> jump_times;
  /// Survival value immediately after each jump.
  std::vector<double> values;
  /// Per-jump factor 1 - d(v)/n(v); values is their running product.
  std::vector<double> factors;

  double operator()(double t) const {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(jump_times.begin(), jump_times.end(), t) - jump_times.begin());
    return k == 0 ? 1.0 : values[k - 1];
  }
};

/// Product-limit estimator with censoring (event == false) as the event.
/// Failures tied with censorings at v stay in the risk set n(v).
inline CensoringSurvival censoring_km(std::span<const SubjectRecord> records) {
  if (records.empty()) throw Error(ErrorKind::EmptyDataset, "censoring_km needs records");
  std::vector<std::pair<double, bool>> obs;
  obs.reserve(records.size());
  for (const auto& r : records) obs.emplace_back(r.followup, r.event);
  std::sort(obs.begin(), obs.end());

  CensoringSurvival sc;
  const std::size_t n = obs.size();
  double surv = 1.0;
  std::size_t i = 0;
  while (i < n) {
    const double v = obs[i].first;
    const std::size_t at_risk = n - i;
    std::size_t censored = 0;
    std::size_t j = i;
    for (; j < n && obs[j].first == v; ++j)
      if (!obs[j].second) ++censored;
    if (censored > 0) {
      const double factor = 1.0 - static_cast<double>(censored) / static_cast<double>(at_risk);
      surv *= factor;
      sc.jump_times.push_back(v);
      sc.values.push_back(surv);
      sc.factors.push_back(factor);
    }
    i = j;
  }
  return sc;
}

inline CensoringSurvival censoring_km(const CohortDataset& dataset) {
  return censoring_km(std::span<const SubjectRecord>(dataset.records()));
}

/// W_n(t) = int_{a0}^{min(t,tau)} prod_{a0 < v <= u} (1 - d(v)/n(v))^{-1} du,
/// stored as a piecewise-linear function on [a0, tau].
class ResidualWeight {
 public:
  ResidualWeight() = default;
  ResidualWeight(std::vector<double> breakpoints, std::vector<double> slopes,
                 std::vector<double> cumulative)
      : breakpoints_(std::move(breakpoints)),
        slopes_(std::move(slopes)),
        cumulative_(std::move(cumulative)) {}

  /// Evaluation clamps t to [a0, tau].
  double operator()(double t) const {
    if (t <= breakpoints_.front()) return 0.0;
    if (t >= breakpoints_.back()) return cumulative_.back();
    const auto k = static_cast<std::size_t>(
        std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t) - breakpoints_.begin() - 1);
    return cumulative_[k] + slopes_[k] * (t - breakpoints_[k]);
  }

  double max_value() const { return cumulative_.back(); }
  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  /// slopes()[k] applies on (breakpoints()[k], breakpoints()[k+1]].
  const std::vector<double>& slopes() const noexcept { return slopes_; }

 private:
  std::vector<double> breakpoints_;
  std::vector<double> slopes_;
  std::vector<double> cumulative_;
};

inline ResidualWeight residual_weight(const CensoringSurvival& sc, const StudyWindow& window) {
  std::vector<double> breaks{window.a0};
  std::vector<double> slopes;
  std::vector<double> cumulative{0.0};
  double inverse = 1.0;
  for (std::size_t k = 0; k < sc.jump_times.size(); ++k) {
    const double v = sc.jump_times[k];
    if (v <= window.a0) continue;
    if (v >= window.tau) break;
    if (sc.factors[k] <= 0.0)
      throw Error(ErrorKind::DegenerateCensoring,
                  "censoring survival reaches zero at t=" + std::to_string(v) + " before tau");
    slopes.push_back(inverse);
    cumulative.push_back(cumulative.back() + inverse * (v - breaks.back()));
    breaks.push_back(v);
    inverse /= sc.factors[k];
  }
  slopes.push_back(inverse);
  cumulative.push_back(cumulative.back() + inverse * (window.tau - breaks.back()));
  breaks.push_back(window.tau);
  return ResidualWeight(std::move(breaks), std::move(slopes), std::move(cumulative));
}

struct CohortRates {
  double cr{};   ///< fraction with event == false
  double or_{};  ///< fraction with an observed initiation time
};

inline CohortRates cohort_stats(const CohortDataset& dataset) {
  std::size_t censored = 0;
  std::size_t observed = 0;
  for (const auto& r : dataset.records()) {
    if (!r.event) ++censored;
    if (r.init_time) ++observed;
  }
  const auto n = static_cast<double>(dataset.size());
  return {static_cast<double>(censored) / n, static_cast<double>(observed) / n};
}

}  // namespace otir
