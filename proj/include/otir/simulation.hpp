#pragma once

// Simulated cohorts with a known optimal regime, the exact value oracle, and
// the replication runner that aggregates bias / SD / SE / coverage rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "otir/error.hpp"
#include "otir/fit.hpp"
#include "otir/format.hpp"
#include "otir/gauss_hermite.hpp"
#include "otir/inference.hpp"
#include "otir/links.hpp"
#include "otir/parallel.hpp"
#include "otir/regime.hpp"
#include "otir/rng.hpp"
#include "otir/survival.hpp"

namespace otir {

enum class HazardModel { m1, m2, m3 };
enum class TreatmentLaw { a1, a2 };

inline std::string to_string(HazardModel m) {
  switch (m) {
    case HazardModel::m1: return "m1";
    case HazardModel::m2: return "m2";
    case HazardModel::m3: return "m3";
  }
  return "?";
}

inline std::string to_string(TreatmentLaw t) { return t == TreatmentLaw::a1 ? "a1" : "a2"; }

inline HazardModel parse_hazard_model(std::string_view s) {
  if (s == "m1") return HazardModel::m1;
  if (s == "m2") return HazardModel::m2;
  if (s == "m3") return HazardModel::m3;
  throw Error(ErrorKind::ParseError, "unknown hazard model '" + std::string(s) + "'");
}

inline TreatmentLaw parse_treatment_law(std::string_view s) {
  if (s == "a1") return TreatmentLaw::a1;
  if (s == "a2") return TreatmentLaw::a2;
  throw Error(ErrorKind::ParseError, "unknown treatment law '" + std::string(s) + "'");
}

struct ScenarioConfig {
  std::string id{"m1_0.2_3_a1"};
  HazardModel model{HazardModel::m1};
  double lambda0{0.2};
  double a0{3.0};
  double tau{30.0};
  TreatmentLaw law{TreatmentLaw::a1};
  std::size_t n{600};
  std::vector<double> beta0{0.0, 0.5, 0.5};
  LinkFamily link{LinkFamily::logistic};
  double censor_upper{100.0};
  /// false forces Q = 0, leaving a plain exponential failure time.
  bool treatment_effect{true};

  void validate() const {
    if (!(lambda0 > 0.0 && std::isfinite(lambda0)))
      throw Error(ErrorKind::InvalidArgument, "lambda0 must be positive");
    StudyWindow::make(a0, tau);
    if (beta0.size() != 3) throw Error(ErrorKind::InvalidArgument, "beta0 must have 3 entries");
    if (!(censor_upper > 0.0)) throw Error(ErrorKind::InvalidArgument, "censor_upper must be positive");
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "n must be positive");
  }

  LinkFunction link_function() const { return {link, a0}; }
  StudyWindow window() const { return {a0, tau}; }
};

inline CovariateSchema simulation_schema() {
  return CovariateSchema({{"x1", CovariateKind::binary}, {"x2", CovariateKind::continuous}});
}

inline double treatment_q(double u) { return 2.0 * (u * u - 1.0); }

/// d0(x) = phi(beta0' (1, x)).
inline double optimal_initiation(const ScenarioConfig& sc, std::span<const double> x) {
  return sc.link_function()(RegimeParams{sc.beta0}.linear_score(x));
}

struct HazardRates {
  double pre{};
  double post{};
};

inline HazardRates hazard_rates(const ScenarioConfig& sc, double a, std::span<const double> x) {
  double mu0 = 0.0;
  double h0 = 1.0;
  switch (sc.model) {
    case HazardModel::m1: break;
    case HazardModel::m2: h0 = 1.0 + x[0]; break;
    case HazardModel::m3: mu0 = std::log((1.0 + x[1] * x[1]) / 2.0); break;
  }
  const double q = sc.treatment_effect ? treatment_q(a - optimal_initiation(sc, x)) : 0.0;
  return {sc.lambda0 * std::exp(mu0), sc.lambda0 * std::exp(mu0 + q * h0)};
}

/// Inverse transform for a hazard equal to lambda_pre before a and
/// lambda_post from a on.
inline double piecewise_exp_sample(double lambda_pre, double lambda_post, double a, double u) {
  const double e = -std::log(u);
  const double pre_mass = lambda_pre * a;
  if (e < pre_mass) return e / lambda_pre;
  return a + (e - pre_mass) / lambda_post;
}

/// Restricted mean residual lifetime over [a0, tau] given survival to a0.
inline double oracle_mrl(const ScenarioConfig& sc, double a, std::span<const double> x) {
  const double rate = hazard_rates(sc, a, x).post;
  return -std::expm1(-rate * (sc.tau - sc.a0)) / rate;
}

/// M(beta): exact over x1 in {0, 1}, Gauss-Hermite over x2 ~ N(0, 1).
inline double true_value(const ScenarioConfig& sc, std::span<const double> beta,
                         std::size_t nodes = 64) {
  if (beta.size() != 3) throw Error(ErrorKind::SchemaMismatch, "beta must have 3 entries");
  const NormalQuadrature rule = gauss_hermite_normal(nodes);
  const RegimeParams params{std::vector<double>(beta.begin(), beta.end())};
  const LinkFunction link = sc.link_function();
  double total = 0.0;
  for (double x1 : {0.0, 1.0}) {
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double x[] = {x1, rule.nodes[k]};
      total += 0.5 * rule.weights[k] * oracle_mrl(sc, link(params.linear_score(x)), x);
    }
  }
  return total;
}

inline double true_optimal_value(const ScenarioConfig& sc, std::size_t nodes = 64) {
  return true_value(sc, sc.beta0, nodes);
}

struct LatentTruth {
  std::vector<double> assigned;
  std::vector<double> failure;
  std::vector<double> censoring;
  std::vector<double> optimal;
};

struct SimulatedCohort {
  CohortDataset dataset;
  LatentTruth truth;
};

/// Sub-streams 0..3 of `seed` drive covariates, assignment, failure and
/// censoring respectively.
inline SimulatedCohort generate_cohort(const ScenarioConfig& sc, std::uint64_t seed) {
  sc.validate();
  RandomStream cov_rng(derive_seed(seed, 0));
  RandomStream assign_rng(derive_seed(seed, 1));
  RandomStream fail_rng(derive_seed(seed, 2));
  RandomStream cens_rng(derive_seed(seed, 3));

  LatentTruth truth;
  std::vector<SubjectRecord> records;
  records.reserve(sc.n);
  for (std::size_t i = 0; i < sc.n; ++i) {
    std::vector<double> x{cov_rng.bernoulli(0.5) ? 1.0 : 0.0, 0.0};
    x[1] = cov_rng.normal();

    double a_star;
    if (sc.law == TreatmentLaw::a1) {
      a_star = assign_rng.uniform(0.0, sc.a0);
    } else {
      a_star = x[0] + x[1] < 0.0 ? sc.a0 * assign_rng.beta(1.0, 2.0) : sc.a0 * assign_rng.beta(2.0, 1.0);
    }

    const HazardRates rates = hazard_rates(sc, a_star, x);
    const double t = piecewise_exp_sample(rates.pre, rates.post, a_star, fail_rng.uniform());
    const double c = std::min(cens_rng.uniform(0.0, sc.censor_upper), sc.tau);

    SubjectRecord r;
    r.followup = std::min(t, c);
    r.event = t <= c;
    if (a_star <= r.followup) r.init_time = a_star;
    truth.assigned.push_back(a_star);
    truth.failure.push_back(t);
    truth.censoring.push_back(c);
    truth.optimal.push_back(optimal_initiation(sc, x));
    r.covariates = std::move(x);
    records.push_back(std::move(r));
  }
  return {validate_cohort(std::move(records), simulation_schema(), sc.window()), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Replication runner

struct ReplicationConfig {
  std::size_t replications{100};
  std::size_t bootstrap{100};
  std::uint64_t seed{1};
  unsigned threads{1};
  BandwidthConstants gammas{};
  double clamp_rel{1e-6};
  ValueQuadrature quad{};
  OptimizerConfig optimizer{};
  std::size_t constant_grid{200};
  /// Every replicate reuses replicate 0's seed.
  bool identical_seeds{false};
};

struct ReplicateOutcome {
  std::uint64_t seed{};
  bool ok{false};
  std::string failure;
  std::vector<double> beta_hat;
  std::vector<double> se_beta;
  double value_hat{};
  double se_value{};
  Interval ci_value;
  double cr{};
  double or_{};
  double pi_i{};
  double pi_c{};
  std::size_t failed_bootstrap{};
};

struct MetricRow {
  std::string estimand;
  double bias{};
  double sd{};
  double se{};
  double cp{};
};

struct ReplicationMetrics {
  std::string scenario;
  /// beta1, beta2, beta3 (intercept first), then V0.
  std::vector<MetricRow> rows;
  double cr{};
  double or_{};
  double pi_i{};
  double pi_c{};
  /// Successful replications.
  std::size_t replications{};
  std::size_t failed_replications{};
  double v0{};
  std::vector<ReplicateOutcome> outcomes;
};

inline std::uint64_t replicate_seed(const ReplicationConfig& cfg, std::size_t r) {
  return derive_seed(cfg.seed, cfg.identical_seeds ? 0 : r);
}

inline ReplicateOutcome run_one_replicate(const ScenarioConfig& sc, const ReplicationConfig& cfg,
                                          std::uint64_t seed) {
  ReplicateOutcome out;
  out.seed = seed;
  try {
    const SimulatedCohort sim = generate_cohort(sc, seed);
    const CohortDataset& data = sim.dataset;
    const LinkFunction link = sc.link_function();
    const TimeTransform g = make_time_transform(sc.a0, cfg.clamp_rel);

    const BootstrapConfig boot{cfg.bootstrap, derive_seed(seed, 4), 1};
    const BootstrapSummary summary =
        bootstrap_fit(data, link, g, cfg.quad, BandwidthRule{cfg.gammas}, cfg.optimizer, boot);

    const Bandwidths bw = resolve_bandwidths(BandwidthRule{cfg.gammas}, data);
    const ResidualWeight w = build_residual_weight(data);
    const Regime fitted = summary.point.regime();
    const Regime constant = optimal_constant_regime(data, bw, w, g, cfg.constant_grid, cfg.quad);
    const CohortRates rates = cohort_stats(data);

    out.beta_hat = summary.point.beta_hat.beta;
    out.se_beta = summary.se_beta;
    out.value_hat = summary.point.value_hat;
    out.se_value = summary.se_value;
    out.ci_value = summary.ci_value;
    out.cr = rates.cr;
    out.or_ = rates.or_;
    out.pi_i = improvement_fraction(data, fitted, bw, w, g);
    out.pi_c = improvement_fraction(data, constant, bw, w, g);
    out.failed_bootstrap = summary.failed_replicates;
    out.ok = true;
  } catch (const Error& e) {
    out.failure = e.what();
  }
  return out;
}

inline ReplicationMetrics summarize_replications(const ScenarioConfig& sc,
                                                 std::vector<ReplicateOutcome> outcomes) {
  ReplicationMetrics m;
  m.scenario = sc.id;
  m.v0 = true_optimal_value(sc);
  std::vector<const ReplicateOutcome*> ok;
  for (const auto& o : outcomes) {
    if (o.ok)
      ok.push_back(&o);
    else
      ++m.failed_replications;
  }
  m.replications = ok.size();
  if (ok.empty()) {
    m.outcomes = std::move(outcomes);
    throw Error(ErrorKind::TooManyFailures, "every replication of scenario " + sc.id + " failed");
  }
  const auto count = static_cast<double>(ok.size());
  const double z = 1.96;

  auto make_row = [&](std::string name, auto estimate, auto se, auto covered, double truth) {
    std::vector<double> est;
    double se_sum = 0.0;
    double hits = 0.0;
    for (const auto* o : ok) {
      est.push_back(estimate(*o));
      se_sum += se(*o);
      if (covered(*o)) hits += 1.0;
    }
    return MetricRow{std::move(name), mean_of(est) - truth, sample_sd(est), se_sum / count, hits / count};
  };

  for (std::size_t j = 0; j < sc.beta0.size(); ++j) {
    const double truth = sc.beta0[j];
    m.rows.push_back(make_row(
        "beta" + std::to_string(j + 1), [j](const ReplicateOutcome& o) { return o.beta_hat[j]; },
        [j](const ReplicateOutcome& o) { return o.se_beta[j]; },
        [j, truth, z](const ReplicateOutcome& o) {
          return std::abs(o.beta_hat[j] - truth) <= z * o.se_beta[j];
        },
        truth));
  }
  const double v0 = m.v0;
  m.rows.push_back(make_row(
      "V0", [](const ReplicateOutcome& o) { return o.value_hat; },
      [](const ReplicateOutcome& o) { return o.se_value; },
      [v0](const ReplicateOutcome& o) { return o.ci_value.contains(v0); }, v0));

  for (const auto* o : ok) {
    m.cr += o->cr;
    m.or_ += o->or_;
    m.pi_i += o->pi_i;
    m.pi_c += o->pi_c;
  }
  m.cr /= count;
  m.or_ /= count;
  m.pi_i /= count;
  m.pi_c /= count;
  m.outcomes = std::move(outcomes);
  return m;
}

inline ReplicationMetrics run_replications(const ScenarioConfig& sc, const ReplicationConfig& cfg) {
  sc.validate();
  if (cfg.replications < 2) throw Error(ErrorKind::InvalidArgument, "replication count must be >= 2");
  std::vector<ReplicateOutcome> outcomes(cfg.replications);
  parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
    outcomes[r] = run_one_replicate(sc, cfg, replicate_seed(cfg, r));
  });
  return summarize_replications(sc, std::move(outcomes));
}

inline constexpr const char* kMetricsHeader = "scenario,estimand,bias,sd,se,cp,cr,or,pi_i,pi_c,r,v0";

inline void write_metrics_rows(std::ostream& os, const ReplicationMetrics& m) {
  for (const auto& row : m.rows) {
    os << m.scenario << ',' << row.estimand << ',' << format_number(row.bias) << ','
       << format_number(row.sd) << ',' << format_number(row.se) << ',' << format_number(row.cp)
       << ',' << format_number(m.cr) << ',' << format_number(m.or_) << ','
       << format_number(m.pi_i) << ',' << format_number(m.pi_c) << ',' << m.replications << ','
       << format_number(m.v0) << '\n';
  }
}

}  // namespace otir
