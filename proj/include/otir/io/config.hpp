#pragma once

// INI-style run and simulation configs. Every key is optional and defaults
// to the library default; unknown sections or keys are rejected so typos do
// not silently fall back to defaults.

#include <cstddef>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "otir/error.hpp"
#include "otir/fit.hpp"
#include "otir/io/csv.hpp"
#include "otir/links.hpp"
#include "otir/nelder_mead.hpp"
#include "otir/regime.hpp"
#include "otir/simulation.hpp"

namespace otir::io {

using boost::property_tree::ptree;

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& value) {
  const auto v = parse_number(value);
  if (!v) throw Error(ErrorKind::ParseError, "config key '" + key + "': '" + value + "' is not a number");
  return *v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  const auto t = trim(value);
  std::uint64_t v{};
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw Error(ErrorKind::ParseError,
                "config key '" + key + "': '" + value + "' is not a non-negative integer");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  const auto t = trim(value);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw Error(ErrorKind::ParseError, "config key '" + key + "': '" + value + "' is not a boolean");
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split_list(value)) out.push_back(parse_double(key, item));
  return out;
}

inline QuadratureMode parse_quadrature_mode(const std::string& s) {
  if (s == "plugin") return QuadratureMode::plugin;
  if (s == "smoothed") return QuadratureMode::smoothed;
  throw Error(ErrorKind::ParseError, "quadrature mode must be plugin or smoothed, got '" + s + "'");
}

inline std::string to_string(QuadratureMode m) {
  return m == QuadratureMode::plugin ? "plugin" : "smoothed";
}

/// Runs a library-side check on config values, reporting failures as
/// ParseError so the CLI treats them as input errors.
template <class F>
void check_config(const std::string& where, F&& check) {
  try {
    check();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) throw;
    throw Error(ErrorKind::ParseError, where + ": " + e.what());
  }
}

/// Reads one section, checking every key against an allow list.
class Section {
 public:
  Section(const ptree* node, std::string name, std::set<std::string> allowed)
      : node_(node), name_(std::move(name)) {
    if (!node_) return;
    for (const auto& [key, child] : *node_) {
      if (!child.empty())
        throw Error(ErrorKind::ParseError, "unexpected nesting under [" + name_ + "]");
      if (!allowed.count(key))
        throw Error(ErrorKind::ParseError, "unknown key '" + key + "' in [" + name_ + "]");
    }
  }

  std::optional<std::string> raw(const std::string& key) const {
    if (!node_) return std::nullopt;
    for (const auto& [k, child] : *node_)
      if (k == key) return std::string(trim(child.data()));
    return std::nullopt;
  }

  std::string full(const std::string& key) const { return name_ + "." + key; }

  void get(const std::string& key, double& out) const {
    if (auto v = raw(key)) out = parse_double(full(key), *v);
  }
  static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seeds are read through the size_t overload");

  void get(const std::string& key, std::size_t& out) const {
    if (auto v = raw(key)) out = static_cast<std::size_t>(parse_u64(full(key), *v));
  }
  void get(const std::string& key, unsigned& out) const {
    if (auto v = raw(key)) out = static_cast<unsigned>(parse_u64(full(key), *v));
  }
  void get(const std::string& key, bool& out) const {
    if (auto v = raw(key)) out = parse_bool(full(key), *v);
  }
  void get(const std::string& key, std::string& out) const {
    if (auto v = raw(key)) out = *v;
  }

 private:
  const ptree* node_;
  std::string name_;
};

inline ptree read_ini(std::istream& in, const std::string& origin) {
  ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::ParseError, origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [key, child] : tree)
    if (child.empty() && !child.data().empty())
      throw Error(ErrorKind::ParseError, origin + ": key '" + key + "' outside any section");
  return tree;
}

inline const ptree* find_section(const ptree& tree, const std::string& name) {
  for (const auto& [key, child] : tree)
    if (key == name) return &child;
  return nullptr;
}

/// Settings shared by fit, evaluate and cv.
struct RunConfig {
  StudyWindow window{3.0, 30.0};
  LinkFamily link{LinkFamily::logistic};
  double clamp_rel{1e-6};

  BandwidthConstants gammas{};
  /// Fixed bandwidths override the gamma rule when set.
  std::optional<Bandwidths> fixed_bandwidths;
  /// Re-derive bandwidths on each bootstrap sample.
  bool per_replicate_bandwidths{true};
  CvConfig cv{};

  OptimizerConfig optimizer{};
  BootstrapConfig bootstrap{500, 1, 0};
  ValueQuadrature quadrature{};
  std::string output_dir{"out"};

  /// Refined fit for subjects assigned before a1; disabled when unset.
  std::optional<double> refine_a1;

  /// Regime specs for evaluate: fitted | fitted:<fit.json> | constant:<a> | observed.
  std::vector<std::string> regimes{"fitted", "observed"};
  std::size_t constant_grid{200};

  LinkFunction link_function() const { return {link, window.a0}; }
  TimeTransform transform() const { return make_time_transform(window.a0, clamp_rel); }

  BandwidthRule bandwidth_rule(const CohortDataset& dataset) const {
    if (fixed_bandwidths) return *fixed_bandwidths;
    if (per_replicate_bandwidths) return gammas;
    return resolve_bandwidths(gammas, dataset);
  }

  Bandwidths bandwidths(const CohortDataset& dataset) const {
    return fixed_bandwidths ? *fixed_bandwidths : resolve_bandwidths(gammas, dataset);
  }
};

inline RunConfig parse_run_config(std::istream& in, const std::string& origin = "config") {
  const ptree tree = read_ini(in, origin);
  static const std::set<std::string> known{"window", "regime", "bandwidth", "optimizer", "bootstrap",
                                           "quadrature", "output", "evaluate", "refine"};
  for (const auto& [name, child] : tree)
    if (!known.count(name)) throw Error(ErrorKind::ParseError, origin + ": unknown section [" + name + "]");

  RunConfig cfg;
  {
    const Section s(find_section(tree, "window"), "window", {"a0", "tau"});
    s.get("a0", cfg.window.a0);
    s.get("tau", cfg.window.tau);
    check_config("[window]", [&] { cfg.window = StudyWindow::make(cfg.window.a0, cfg.window.tau); });
  }
  {
    const Section s(find_section(tree, "regime"), "regime", {"link", "clamp"});
    if (auto v = s.raw("link")) cfg.link = parse_link_family(*v);
    s.get("clamp", cfg.clamp_rel);
    check_config("regime.clamp", [&] { make_time_transform(cfg.window.a0, cfg.clamp_rel); });
  }
  {
    const Section s(find_section(tree, "bandwidth"), "bandwidth",
                    {"gamma1", "gamma2", "h1", "h2", "per_replicate", "cv_gamma1", "cv_gamma2",
                     "cv_folds", "cv_seed"});
    s.get("gamma1", cfg.gammas.gamma1);
    s.get("gamma2", cfg.gammas.gamma2);
    if (!(cfg.gammas.gamma1 > 0.0 && cfg.gammas.gamma2 > 0.0))
      throw Error(ErrorKind::ParseError, "bandwidth.gamma1 and bandwidth.gamma2 must be positive");
    const auto h1 = s.raw("h1");
    const auto h2 = s.raw("h2");
    if (h1.has_value() != h2.has_value())
      throw Error(ErrorKind::ParseError, "bandwidth.h1 and bandwidth.h2 must be given together");
    if (h1) {
      Bandwidths bw{parse_doubles("bandwidth.h1", *h1), parse_double("bandwidth.h2", *h2)};
      check_config("[bandwidth]", [&] { bw.validate(); });
      cfg.fixed_bandwidths = std::move(bw);
    }
    s.get("per_replicate", cfg.per_replicate_bandwidths);
    auto g1 = s.raw("cv_gamma1");
    auto g2 = s.raw("cv_gamma2");
    if (g1 || g2) {
      const auto l1 = g1 ? parse_doubles("bandwidth.cv_gamma1", *g1) : std::vector<double>{cfg.gammas.gamma1};
      const auto l2 = g2 ? parse_doubles("bandwidth.cv_gamma2", *g2) : std::vector<double>{cfg.gammas.gamma2};
      cfg.cv.grid.clear();
      for (double a : l1)
        for (double b : l2) {
          if (!(a > 0.0 && b > 0.0))
            throw Error(ErrorKind::ParseError, "cross-validation grid values must be positive");
          cfg.cv.grid.push_back({a, b});
        }
    }
    s.get("cv_folds", cfg.cv.folds);
    s.get("cv_seed", cfg.cv.seed);
  }
  {
    const Section s(find_section(tree, "optimizer"), "optimizer",
                    {"reflection", "expansion", "contraction", "shrink", "initial_step", "tolerance",
                     "max_iterations", "initial_point"});
    s.get("reflection", cfg.optimizer.reflection);
    s.get("expansion", cfg.optimizer.expansion);
    s.get("contraction", cfg.optimizer.contraction);
    s.get("shrink", cfg.optimizer.shrink);
    s.get("initial_step", cfg.optimizer.initial_step);
    s.get("tolerance", cfg.optimizer.tolerance);
    s.get("max_iterations", cfg.optimizer.max_iterations);
    if (auto v = s.raw("initial_point")) cfg.optimizer.initial_point = parse_doubles("optimizer.initial_point", *v);
    check_config("[optimizer]", [&] { cfg.optimizer.validate(); });
  }
  {
    const Section s(find_section(tree, "bootstrap"), "bootstrap", {"replicates", "seed", "threads"});
    s.get("replicates", cfg.bootstrap.replicates);
    s.get("seed", cfg.bootstrap.seed);
    s.get("threads", cfg.bootstrap.threads);
    if (cfg.bootstrap.replicates < 2) throw Error(ErrorKind::ParseError, "bootstrap.replicates must be >= 2");
  }
  {
    const Section s(find_section(tree, "quadrature"), "quadrature", {"mode", "nodes"});
    if (auto v = s.raw("mode")) cfg.quadrature.mode = parse_quadrature_mode(*v);
    s.get("nodes", cfg.quadrature.nodes);
    if (cfg.quadrature.nodes == 0) throw Error(ErrorKind::ParseError, "quadrature.nodes must be >= 1");
  }
  {
    const Section s(find_section(tree, "output"), "output", {"dir"});
    s.get("dir", cfg.output_dir);
  }
  {
    const Section s(find_section(tree, "refine"), "refine", {"a1"});
    if (auto v = s.raw("a1")) cfg.refine_a1 = parse_double("refine.a1", *v);
  }
  {
    const Section s(find_section(tree, "evaluate"), "evaluate", {"regimes", "constant_grid"});
    if (auto v = s.raw("regimes")) cfg.regimes = split_list(*v);
    s.get("constant_grid", cfg.constant_grid);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open config file '" + path + "'");
  return parse_run_config(in, path);
}

/// [simulate] holds replication settings; each [scenario:<id>] section adds
/// one scenario, in file order.
struct SimulateConfig {
  ReplicationConfig replication{};
  std::vector<ScenarioConfig> scenarios;
  std::string output_dir{"out"};
  /// Also write replicate 0's cohort of each scenario as cohort_<id>.csv.
  bool write_cohort{true};
};

inline SimulateConfig parse_simulate_config(std::istream& in, const std::string& origin = "config") {
  const ptree tree = read_ini(in, origin);
  SimulateConfig cfg;
  cfg.replication.threads = 0;
  for (const auto& [name, child] : tree) {
    if (name == "simulate") {
      const Section s(&child, name,
                      {"replications", "bootstrap", "seed", "threads", "gamma1", "gamma2", "clamp",
                       "quadrature", "nodes", "constant_grid", "identical_seeds", "output_dir", "write_cohort"});
      auto& r = cfg.replication;
      s.get("replications", r.replications);
      s.get("bootstrap", r.bootstrap);
      s.get("seed", r.seed);
      s.get("threads", r.threads);
      s.get("gamma1", r.gammas.gamma1);
      s.get("gamma2", r.gammas.gamma2);
      s.get("clamp", r.clamp_rel);
      if (auto v = s.raw("quadrature")) r.quad.mode = parse_quadrature_mode(*v);
      s.get("nodes", r.quad.nodes);
      s.get("constant_grid", r.constant_grid);
      s.get("identical_seeds", r.identical_seeds);
      s.get("output_dir", cfg.output_dir);
      s.get("write_cohort", cfg.write_cohort);
      if (r.replications < 2) throw Error(ErrorKind::ParseError, "simulate.replications must be >= 2");
      if (r.bootstrap < 2) throw Error(ErrorKind::ParseError, "simulate.bootstrap must be >= 2");
    } else if (name.rfind("scenario:", 0) == 0) {
      const Section s(&child, name,
                      {"model", "lambda0", "a0", "tau", "law", "n", "beta0", "link", "censor_upper"});
      ScenarioConfig sc;
      sc.id = name.substr(9);
      if (sc.id.empty()) throw Error(ErrorKind::ParseError, origin + ": scenario section needs an id");
      if (auto v = s.raw("model")) sc.model = parse_hazard_model(*v);
      s.get("lambda0", sc.lambda0);
      s.get("a0", sc.a0);
      s.get("tau", sc.tau);
      if (auto v = s.raw("law")) sc.law = parse_treatment_law(*v);
      s.get("n", sc.n);
      if (auto v = s.raw("beta0")) sc.beta0 = parse_doubles(name + ".beta0", *v);
      if (auto v = s.raw("link")) sc.link = parse_link_family(*v);
      s.get("censor_upper", sc.censor_upper);
      check_config("[" + name + "]", [&] { sc.validate(); });
      cfg.scenarios.push_back(std::move(sc));
    } else {
      throw Error(ErrorKind::ParseError, origin + ": unknown section [" + name + "]");
    }
  }
  if (cfg.scenarios.empty())
    throw Error(ErrorKind::ParseError, origin + ": no [scenario:<id>] section");
  return cfg;
}

inline SimulateConfig load_simulate_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open config file '" + path + "'");
  return parse_simulate_config(in, path);
}

}  // namespace otir::io
