#pragma once

// The fit / evaluate / cv / simulate commands. Each takes already-parsed
// inputs, writes its report files into an output directory and returns the
// main JSON report. Everything except the "metadata" block is a pure function
// of the inputs and seeds.

#include <chrono>
#include <cstddef>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "otir/error.hpp"
#include "otir/fit.hpp"
#include "otir/format.hpp"
#include "otir/inference.hpp"
#include "otir/io/config.hpp"
#include "otir/io/csv.hpp"
#include "otir/normal.hpp"
#include "otir/regime.hpp"
#include "otir/simulation.hpp"

namespace otir::cmd {

using nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

/// Command-line flags that override config values.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::size_t> bootstrap;
  std::optional<QuadratureMode> quadrature;
  std::optional<std::string> out;
};

inline void apply(const Overrides& o, io::RunConfig& cfg) {
  if (o.seed) {
    cfg.bootstrap.seed = *o.seed;
    cfg.cv.seed = *o.seed;
  }
  if (o.threads) {
    cfg.bootstrap.threads = *o.threads;
    cfg.cv.threads = *o.threads;
  }
  if (o.bootstrap) {
    if (*o.bootstrap < 2) throw Error(ErrorKind::ParseError, "--bootstrap must be >= 2");
    cfg.bootstrap.replicates = *o.bootstrap;
  }
  if (o.quadrature) cfg.quadrature.mode = *o.quadrature;
  if (o.out) cfg.output_dir = *o.out;
}

inline void apply(const Overrides& o, io::SimulateConfig& cfg) {
  if (o.seed) cfg.replication.seed = *o.seed;
  if (o.threads) cfg.replication.threads = *o.threads;
  if (o.bootstrap) {
    if (*o.bootstrap < 2) throw Error(ErrorKind::ParseError, "--bootstrap must be >= 2");
    cfg.replication.bootstrap = *o.bootstrap;
  }
  if (o.quadrature) cfg.replication.quad.mode = *o.quadrature;
  if (o.out) cfg.output_dir = *o.out;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline ordered_json metadata(double runtime_seconds, unsigned threads) {
  return {{"tool", "otir"},
          {"version", kVersion},
          {"generated_at", utc_timestamp()},
          {"runtime_seconds", runtime_seconds},
          {"threads", resolve_threads(threads)}};
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_{std::chrono::steady_clock::now()};
};

inline std::filesystem::path prepare_output(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::InvalidArgument, "cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const std::filesystem::path& path, const ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline std::vector<std::string> coefficient_names(const CovariateSchema& schema) {
  std::vector<std::string> names{"intercept"};
  for (const auto& c : schema.entries()) names.push_back(c.name);
  return names;
}

/// Two-sided normal p-value of est / se; NaN (null in JSON) when se = 0.
inline double coefficient_p_value(double est, double se) {
  if (!(se > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return two_sided_p_value(est / se);
}

inline ordered_json window_json(const StudyWindow& w) { return {{"a0", w.a0}, {"tau", w.tau}}; }

inline ordered_json bandwidth_json(const Bandwidths& bw) { return {{"h1", bw.h1}, {"h2", bw.h2}}; }

inline ordered_json interval_json(const Interval& i) { return {{"lower", i.lower}, {"upper", i.upper}}; }

// ---------------------------------------------------------------------------
// fit

inline ordered_json cmd_fit(const io::LoadedCohort& input, const io::RunConfig& cfg) {
  const Stopwatch clock;
  const CohortDataset& data = input.dataset;
  const auto out_dir = prepare_output(cfg.output_dir);
  const LinkFunction link = cfg.link_function();
  const TimeTransform g = cfg.transform();
  const Bandwidths bw = cfg.bandwidths(data);

  const BootstrapSummary boot =
      bootstrap_fit(data, link, g, cfg.quadrature, cfg.bandwidth_rule(data), cfg.optimizer, cfg.bootstrap);
  const FitResult& fit = boot.point;

  ordered_json coefficients = ordered_json::array();
  const auto names = coefficient_names(data.schema());
  for (std::size_t j = 0; j < names.size(); ++j) {
    const double est = fit.beta_hat.beta[j];
    coefficients.push_back({{"name", names[j]},
                            {"estimate", est},
                            {"se", boot.se_beta[j]},
                            {"ci", interval_json(boot.ci_beta[j])},
                            {"p_value", coefficient_p_value(est, boot.se_beta[j])}});
  }

  ordered_json report;
  report["command"] = "fit";
  report["n"] = data.size();
  report["window"] = window_json(data.window());
  report["link"] = std::string(to_string(link.family));
  report["quadrature"] = io::to_string(cfg.quadrature.mode);
  report["bandwidths"] = bandwidth_json(bw);
  report["coefficients"] = std::move(coefficients);
  report["value"] = {{"estimate", fit.value_hat},
                     {"se", boot.se_value},
                     {"ci", interval_json(boot.ci_value)}};
  report["optimizer"] = {{"iterations", fit.iterations},
                         {"evaluations", fit.evaluations},
                         {"converged", fit.converged},
                         {"spread", fit.spread}};
  report["bootstrap"] = {{"replicates", cfg.bootstrap.replicates},
                         {"failed", boot.failed_replicates},
                         {"seed", cfg.bootstrap.seed},
                         {"per_replicate_bandwidths",
                          !cfg.fixed_bandwidths && cfg.per_replicate_bandwidths}};

  if (cfg.refine_a1) {
    ordered_json refined{{"a1", *cfg.refine_a1}};
    try {
      const RefinedFit r = refined_critical_fit(data, fit, link, g, *cfg.refine_a1, cfg.gammas,
                                                cfg.quadrature, cfg.optimizer);
      ordered_json beta = ordered_json::array();
      for (std::size_t j = 0; j < names.size(); ++j)
        beta.push_back({{"name", names[j]}, {"estimate", r.fit.beta_hat.beta[j]}});
      refined["subset_size"] = r.subset_ids.size();
      refined["cohort_size"] = r.cohort_ids.size();
      refined["coefficients"] = std::move(beta);
      refined["value"] = r.fit.value_hat;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyCriticalSubset && e.kind() != ErrorKind::DegenerateVariance &&
          e.kind() != ErrorKind::EmptyRiskSet)
        throw;
      refined["error"] = e.what();
    }
    report["refined"] = std::move(refined);
  }

  std::string assignments = "id,assigned_time\n";
  const Regime regime = fit.regime();
  for (std::size_t i = 0; i < data.size(); ++i)
    assignments += input.ids[i] + "," + format_number(regime.assign(data[i].covariates)) + "\n";
  write_text(out_dir / "assignments.csv", assignments);

  report["metadata"] = metadata(clock.seconds(), cfg.bootstrap.threads);
  write_json(out_dir / "fit.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// evaluate

struct ParsedRegime {
  std::string label;
  Regime regime;
  bool refit{false};
};

inline Regime regime_from_fit_report(const std::string& path, const CohortDataset& data) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open fit report '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
    const double a0 = j.at("window").at("a0").get<double>();
    if (a0 != data.window().a0)
      throw Error(ErrorKind::ParseError, "fit report '" + path + "' was produced with a different a0");
    std::vector<double> beta;
    for (const auto& c : j.at("coefficients")) beta.push_back(c.at("estimate").get<double>());
    if (beta.size() != data.schema().size() + 1)
      throw Error(ErrorKind::ParseError, "fit report '" + path + "' has the wrong coefficient count");
    const LinkFunction link{parse_link_family(j.at("link").get<std::string>()), a0};
    return Regime::parametric(link, std::move(beta));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, "fit report '" + path + "': " + e.what());
  }
}

inline std::vector<ParsedRegime> parse_regimes(const std::vector<std::string>& specs,
                                               const CohortDataset& data, const io::RunConfig& cfg) {
  if (specs.size() < 2) throw Error(ErrorKind::ParseError, "evaluate needs at least two regimes");
  std::vector<ParsedRegime> out;
  for (const auto& spec : specs) {
    if (spec == "observed") {
      out.push_back({spec, Regime::observed(), false});
    } else if (spec == "fitted") {
      // Placeholder; replaced by the full-data fit in cmd_evaluate.
      out.push_back({spec, Regime::parametric(cfg.link_function(), std::vector<double>(data.schema().size() + 1, 0.0)), true});
    } else if (spec.rfind("fitted:", 0) == 0) {
      out.push_back({spec, regime_from_fit_report(spec.substr(7), data), false});
    } else if (spec.rfind("constant:", 0) == 0) {
      const double a = io::parse_double("evaluate.regimes", spec.substr(9));
      try {
        out.push_back({spec, Regime::constant(a, data.window().a0), false});
      } catch (const Error& e) {
        throw Error(ErrorKind::ParseError, "regime '" + spec + "': " + e.what());
      }
    } else {
      throw Error(ErrorKind::ParseError,
                  "unknown regime '" + spec + "' (expected fitted, fitted:<path>, constant:<a> or observed)");
    }
  }
  return out;
}

inline ordered_json cmd_evaluate(const io::LoadedCohort& input, const io::RunConfig& cfg) {
  const Stopwatch clock;
  const CohortDataset& data = input.dataset;
  auto regimes = parse_regimes(cfg.regimes, data, cfg);
  const auto out_dir = prepare_output(cfg.output_dir);
  const TimeTransform g = cfg.transform();
  const Bandwidths bw = cfg.bandwidths(data);
  const ResidualWeight w = build_residual_weight(data);

  for (auto& r : regimes)
    if (r.refit) r.regime = fit_otir(data, cfg.link_function(), g, bw, cfg.quadrature, cfg.optimizer).regime();

  std::vector<RegimeSpec> specs;
  for (const auto& r : regimes) specs.push_back({r.regime, r.refit});
  const BootstrapValues values = bootstrap_regime_values(data, specs, g, cfg.quadrature,
                                                         cfg.bandwidth_rule(data), cfg.optimizer, cfg.bootstrap);

  std::string long_csv = "regime,replicate,value\n";
  for (std::size_t k = 0; k < values.replicates.size(); ++k)
    for (std::size_t r = 0; r < regimes.size(); ++r)
      long_csv += regimes[r].label + "," + std::to_string(values.replicate_ids[k]) + "," +
                  format_number(values.replicates[k][r]) + "\n";
  write_text(out_dir / "bootstrap_values.csv", long_csv);

  ordered_json report;
  report["command"] = "evaluate";
  report["n"] = data.size();
  report["window"] = window_json(data.window());
  report["bandwidths"] = bandwidth_json(bw);
  ordered_json list = ordered_json::array();
  for (std::size_t r = 0; r < regimes.size(); ++r) {
    std::vector<double> column;
    for (const auto& rep : values.replicates) column.push_back(rep[r]);
    ordered_json entry{{"label", regimes[r].label},
                       {"value", values.point[r]},
                       {"se", sample_sd(column)},
                       {"ci", interval_json(quantile_interval(column))},
                       {"improvement_fraction", improvement_fraction(data, regimes[r].regime, bw, w, g)}};
    if (regimes[r].regime.is_parametric()) {
      const auto& p = std::get<Regime::Parametric>(regimes[r].regime.variant());
      entry["coefficients"] = p.params.beta;
    }
    list.push_back(std::move(entry));
  }
  report["regimes"] = std::move(list);

  ordered_json diffs = ordered_json::array();
  for (std::size_t a = 0; a < regimes.size(); ++a)
    for (std::size_t b = a + 1; b < regimes.size(); ++b) {
      const ValueDifference d = paired_difference(values, a, b);
      diffs.push_back({{"regime_a", regimes[a].label},
                       {"regime_b", regimes[b].label},
                       {"difference", d.point},
                       {"ci", interval_json(d.ci)}});
    }
  report["differences"] = std::move(diffs);
  report["bootstrap"] = {{"replicates", cfg.bootstrap.replicates},
                         {"failed", values.failed_replicates},
                         {"seed", cfg.bootstrap.seed}};
  report["metadata"] = metadata(clock.seconds(), cfg.bootstrap.threads);
  write_json(out_dir / "evaluate.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// cv

inline ordered_json cmd_cv(const io::LoadedCohort& input, const io::RunConfig& cfg) {
  const Stopwatch clock;
  const CohortDataset& data = input.dataset;
  const auto out_dir = prepare_output(cfg.output_dir);
  const CvResult cv =
      cv_bandwidth(data, cfg.link_function(), cfg.transform(), cfg.quadrature, cfg.cv, cfg.optimizer);

  std::string table = "gamma1,gamma2,score";
  for (std::size_t k = 0; k < cfg.cv.folds; ++k) table += ",fold" + std::to_string(k + 1);
  table += "\n";
  ordered_json rows = ordered_json::array();
  for (const auto& cell : cv.table) {
    table += format_number(cell.gamma1) + "," + format_number(cell.gamma2) + "," + format_number(cell.score);
    for (double s : cell.fold_scores) table += "," + format_number(s);
    table += "\n";
    rows.push_back({{"gamma1", cell.gamma1}, {"gamma2", cell.gamma2}, {"score", cell.score},
                    {"fold_scores", cell.fold_scores}});
  }
  write_text(out_dir / "cv_table.csv", table);

  ordered_json report;
  report["command"] = "cv";
  report["n"] = data.size();
  report["window"] = window_json(data.window());
  report["folds"] = cfg.cv.folds;
  report["seed"] = cfg.cv.seed;
  report["selected"] = {{"gamma1", cv.gamma1}, {"gamma2", cv.gamma2}};
  report["table"] = std::move(rows);
  report["metadata"] = metadata(clock.seconds(), cfg.cv.threads);
  write_json(out_dir / "cv.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// simulate

/// Scenario k runs with master seed derive_seed(seed, k).
inline ordered_json cmd_simulate(const io::SimulateConfig& cfg) {
  const Stopwatch clock;
  const auto out_dir = prepare_output(cfg.output_dir);
  std::ostringstream metrics;
  metrics << kMetricsHeader << '\n';
  std::string replicates =
      "scenario,replicate,seed,ok,beta1,beta2,beta3,se1,se2,se3,value,se_value,ci_lower,ci_upper,cr,or,pi_i,pi_c,failed_bootstrap\n";

  ordered_json scenarios = ordered_json::array();
  ordered_json runtimes = ordered_json::object();
  for (std::size_t k = 0; k < cfg.scenarios.size(); ++k) {
    const Stopwatch scenario_clock;
    const ScenarioConfig& sc = cfg.scenarios[k];
    ReplicationConfig rc = cfg.replication;
    rc.seed = derive_seed(cfg.replication.seed, k);
    const ReplicationMetrics m = run_replications(sc, rc);
    if (cfg.write_cohort) {
      std::ostringstream cohort;
      io::write_cohort_csv(cohort, generate_cohort(sc, replicate_seed(rc, 0)).dataset);
      write_text(out_dir / ("cohort_" + sc.id + ".csv"), cohort.str());
    }
    write_metrics_rows(metrics, m);

    for (std::size_t r = 0; r < m.outcomes.size(); ++r) {
      const auto& o = m.outcomes[r];
      replicates += sc.id + "," + std::to_string(r) + "," + std::to_string(o.seed) + "," + (o.ok ? "1" : "0");
      if (o.ok) {
        for (double b : o.beta_hat) replicates += "," + format_number(b);
        for (double s : o.se_beta) replicates += "," + format_number(s);
        for (double v : {o.value_hat, o.se_value, o.ci_value.lower, o.ci_value.upper, o.cr, o.or_, o.pi_i, o.pi_c})
          replicates += "," + format_number(v);
        replicates += "," + std::to_string(o.failed_bootstrap);
      } else {
        replicates += ",,,,,,,,,,,,,,";
      }
      replicates += "\n";
    }

    ordered_json failures = ordered_json::array();
    for (std::size_t r = 0; r < m.outcomes.size(); ++r)
      if (!m.outcomes[r].ok) failures.push_back({{"replicate", r}, {"error", m.outcomes[r].failure}});
    scenarios.push_back({{"id", sc.id},
                         {"model", to_string(sc.model)},
                         {"lambda0", sc.lambda0},
                         {"a0", sc.a0},
                         {"tau", sc.tau},
                         {"law", to_string(sc.law)},
                         {"n", sc.n},
                         {"beta0", sc.beta0},
                         {"link", std::string(to_string(sc.link))},
                         {"censor_upper", sc.censor_upper},
                         {"seed", rc.seed},
                         {"v0", m.v0},
                         {"replications", m.replications},
                         {"failed_replications", m.failed_replications},
                         {"failures", std::move(failures)}});
    runtimes[sc.id] = scenario_clock.seconds();
  }
  write_text(out_dir / "metrics.csv", metrics.str());
  write_text(out_dir / "replicates.csv", replicates);

  ordered_json manifest;
  manifest["command"] = "simulate";
  manifest["seed"] = cfg.replication.seed;
  manifest["replications"] = cfg.replication.replications;
  manifest["bootstrap"] = cfg.replication.bootstrap;
  manifest["gammas"] = {{"gamma1", cfg.replication.gammas.gamma1}, {"gamma2", cfg.replication.gammas.gamma2}};
  manifest["quadrature"] = io::to_string(cfg.replication.quad.mode);
  manifest["scenarios"] = std::move(scenarios);
  manifest["metadata"] = metadata(clock.seconds(), cfg.replication.threads);
  manifest["metadata"]["scenario_runtime_seconds"] = std::move(runtimes);
  write_json(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace otir::cmd
