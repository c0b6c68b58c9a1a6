// otir: fit, evaluate, cross-validate and simulate optimal treatment
// initiation regimes from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 input or config error, 3 failure
// while fitting or resampling.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "otir/commands.hpp"

namespace {

constexpr int kInputError = 2;
constexpr int kFitError = 3;

struct Flags {
  std::string config;
  std::string data;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::size_t> bootstrap;
  std::optional<std::string> quadrature;
};

void add_common(CLI::App* sub, Flags& f, bool needs_data) {
  sub->add_option("--config", f.config, "INI config file")->check(CLI::ExistingFile);
  if (needs_data) sub->add_option("--data", f.data, "cohort CSV")->required();
  sub->add_option("--out", f.out, "output directory (overrides the config)");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--threads", f.threads, "worker threads, 0 = all cores");
  sub->add_option("--bootstrap", f.bootstrap, "bootstrap replicates B");
  sub->add_option("--quadrature", f.quadrature, "value quadrature")
      ->check(CLI::IsMember({"plugin", "smoothed"}));
}

otir::cmd::Overrides overrides(const Flags& f) {
  otir::cmd::Overrides o;
  o.seed = f.seed;
  o.threads = f.threads;
  o.bootstrap = f.bootstrap;
  o.out = f.out;
  if (f.quadrature) o.quadrature = otir::io::parse_quadrature_mode(*f.quadrature);
  return o;
}

int report(const otir::Error& e, int code) {
  std::cerr << "otir: " << e.what() << '\n';
  return code;
}

template <class Command>
int run_on_data(const Flags& f, Command command) {
  otir::io::RunConfig cfg;
  std::optional<otir::io::LoadedCohort> input;
  try {
    if (!f.config.empty()) cfg = otir::io::load_run_config(f.config);
    otir::cmd::apply(overrides(f), cfg);
    input.emplace(otir::io::read_cohort_csv(f.data, cfg.window));
  } catch (const otir::Error& e) {
    return report(e, kInputError);
  }
  try {
    command(*input, cfg);
  } catch (const otir::Error& e) {
    const bool input_problem = e.kind() == otir::ErrorKind::FoldTooSmall ||
                               e.kind() == otir::ErrorKind::ParseError ||
                               e.kind() == otir::ErrorKind::SchemaMismatch;
    return report(e, input_problem ? kInputError : kFitError);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal treatment initiation regimes from censored cohort data"};
  app.require_subcommand(1);
  Flags fit_flags, eval_flags, cv_flags, sim_flags;
  auto* fit = app.add_subcommand("fit", "estimate the optimal regime with bootstrap inference");
  add_common(fit, fit_flags, true);
  auto* evaluate = app.add_subcommand("evaluate", "compare regimes by estimated value");
  add_common(evaluate, eval_flags, true);
  auto* cv = app.add_subcommand("cv", "cross-validate the bandwidth constants");
  add_common(cv, cv_flags, true);
  auto* simulate = app.add_subcommand("simulate", "run the simulation scenarios of a config");
  add_common(simulate, sim_flags, false);
  simulate->get_option("--config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (*fit) return run_on_data(fit_flags, otir::cmd::cmd_fit);
  if (*evaluate) return run_on_data(eval_flags, otir::cmd::cmd_evaluate);
  if (*cv) return run_on_data(cv_flags, otir::cmd::cmd_cv);

  otir::io::SimulateConfig cfg;
  try {
    cfg = otir::io::load_simulate_config(sim_flags.config);
    otir::cmd::apply(overrides(sim_flags), cfg);
  } catch (const otir::Error& e) {
    return report(e, kInputError);
  }
  try {
    otir::cmd::cmd_simulate(cfg);
  } catch (const otir::Error& e) {
    return report(e, kFitError);
  }
  return 0;
}
