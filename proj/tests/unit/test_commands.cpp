#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <catch_amalgamated.hpp>

#include "otir/commands.hpp"

using namespace otir;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("otir_test_commands_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

io::LoadedCohort simulated_input(std::size_t n, std::uint64_t seed) {
  ScenarioConfig sc;
  sc.n = n;
  std::ostringstream csv;
  io::write_cohort_csv(csv, generate_cohort(sc, seed).dataset);
  std::istringstream in(csv.str());
  return io::read_cohort_csv(in, sc.window());
}

nlohmann::ordered_json without_metadata(nlohmann::ordered_json j) {
  j.erase("metadata");
  return j;
}

}  // namespace

TEST_CASE("two-sided normal p-values") {
  CHECK(cmd::coefficient_p_value(0.669, 0.288) == Approx(0.020).margin(5e-4));
  CHECK(cmd::coefficient_p_value(0.0, 1.0) == Approx(1.0));
  CHECK(cmd::coefficient_p_value(-1.959963984540054, 1.0) == Approx(0.05).epsilon(1e-9));
  CHECK(std::isnan(cmd::coefficient_p_value(1.0, 0.0)));
}

TEST_CASE("fit on a simulated cohort CSV") {
  const auto input = simulated_input(200, 17);
  io::RunConfig cfg;
  cfg.bootstrap = {4, 5, 1};
  cfg.output_dir = scratch("fit_a").string();
  const auto report = cmd::cmd_fit(input, cfg);
  REQUIRE(report["coefficients"].size() == 3);
  CHECK(report["coefficients"][0]["name"] == "intercept");
  CHECK(report["coefficients"][2]["name"] == "x2");
  CHECK(report["n"] == 200);
  CHECK(report["bootstrap"]["replicates"] == 4);

  const auto on_disk = nlohmann::ordered_json::parse(slurp(fs::path(cfg.output_dir) / "fit.json"));
  CHECK(without_metadata(on_disk) == without_metadata(report));
  CHECK(on_disk["metadata"]["tool"] == "otir");

  const std::string assignments = slurp(fs::path(cfg.output_dir) / "assignments.csv");
  CHECK(assignments.rfind("id,assigned_time\n1,", 0) == 0);
  CHECK(std::count(assignments.begin(), assignments.end(), '\n') == 201);

  io::RunConfig again = cfg;
  again.output_dir = scratch("fit_b").string();
  again.bootstrap.threads = 4;
  const auto second = cmd::cmd_fit(input, again);
  CHECK(without_metadata(second).dump(2) == without_metadata(report).dump(2));
  CHECK(slurp(fs::path(again.output_dir) / "assignments.csv") == assignments);
}

TEST_CASE("fit with refinement reports the refined coefficients") {
  const auto input = simulated_input(300, 18);
  io::RunConfig cfg;
  cfg.bootstrap = {2, 5, 1};
  cfg.refine_a1 = 2.0;
  cfg.output_dir = scratch("fit_refined").string();
  const auto report = cmd::cmd_fit(input, cfg);
  REQUIRE(report.contains("refined"));
  CHECK(report["refined"]["a1"] == 2.0);
  if (!report["refined"].contains("error")) CHECK(report["refined"]["coefficients"].size() == 3);
}

TEST_CASE("evaluate observed against itself") {
  const auto input = simulated_input(150, 19);
  io::RunConfig cfg;
  cfg.bootstrap = {3, 1, 1};
  cfg.regimes = {"observed", "observed"};
  cfg.output_dir = scratch("eval_obs").string();
  const auto report = cmd::cmd_evaluate(input, cfg);
  REQUIRE(report["differences"].size() == 1);
  CHECK(report["differences"][0]["difference"] == 0.0);
  CHECK(report["differences"][0]["ci"]["lower"] == 0.0);
  CHECK(report["differences"][0]["ci"]["upper"] == 0.0);
  CHECK(report["regimes"][0]["improvement_fraction"] == 0.0);
}

TEST_CASE("evaluate constant regimes on a long window") {
  // Synthetic cohort with a0 = 168 and follow-up in the thousands.
  RandomStream rng(23);
  std::ostringstream csv;
  csv << "id,time,event,init_time,bin:sex,num:age\n";
  for (int i = 0; i < 120; ++i) {
    const double a = rng.uniform(0.0, 168.0);
    const double t = 30.0 + rng.uniform(0.0, 1.0) * 900.0 + 2.0 * a;
    const double c = rng.uniform(0.0, 2000.0);
    const double followup = std::min({t, c, 1500.0});
    csv << i << ',' << followup << ',' << (t <= std::min(c, 1500.0) ? 1 : 0) << ',';
    if (a <= followup) csv << a;
    csv << ',' << (rng.bernoulli(0.5) ? 1 : 0) << ',' << rng.normal() << '\n';
  }
  std::istringstream in(csv.str());
  const auto input = io::read_cohort_csv(in, {168.0, 1500.0});

  io::RunConfig cfg;
  cfg.window = {168.0, 1500.0};
  cfg.bootstrap = {4, 2, 1};
  cfg.regimes = {"constant:28", "constant:56", "constant:84", "constant:112", "constant:140", "observed"};
  cfg.output_dir = scratch("eval_const").string();
  const auto report = cmd::cmd_evaluate(input, cfg);
  REQUIRE(report["regimes"].size() == 6);
  CHECK(report["regimes"][0]["label"] == "constant:28");
  CHECK(report["differences"].size() == 15);

  const std::string long_csv = slurp(fs::path(cfg.output_dir) / "bootstrap_values.csv");
  CHECK(long_csv.rfind("regime,replicate,value\n", 0) == 0);
  const auto rows = std::count(long_csv.begin(), long_csv.end(), '\n') - 1;
  CHECK(rows == 6 * (4 - static_cast<long>(report["bootstrap"]["failed"].get<std::size_t>())));

  // The point values agree with the library called directly.
  const auto bw = default_bandwidths(input.dataset, 1.0, 1.0);
  const auto w = build_residual_weight(input.dataset);
  const double v28 = regime_value(input.dataset, Regime::constant(28.0, 168.0), bw, w, make_time_transform(168.0));
  CHECK(report["regimes"][0]["value"].get<double>() == v28);
}

TEST_CASE("evaluate a regime loaded from a fit report") {
  const auto input = simulated_input(150, 20);
  io::RunConfig cfg;
  cfg.bootstrap = {2, 1, 1};
  cfg.output_dir = scratch("eval_fit").string();
  const auto fit = cmd::cmd_fit(input, cfg);

  cfg.regimes = {"fitted:" + (fs::path(cfg.output_dir) / "fit.json").string(), "fitted", "observed"};
  cfg.output_dir = scratch("eval_fit_out").string();
  cfg.bootstrap = {3, 1, 1};
  const auto report = cmd::cmd_evaluate(input, cfg);
  std::vector<double> beta;
  for (const auto& c : fit["coefficients"]) beta.push_back(c["estimate"].get<double>());
  CHECK(report["regimes"][0]["coefficients"].get<std::vector<double>>() == beta);
  CHECK(report["regimes"][1]["coefficients"].get<std::vector<double>>() == beta);
  CHECK(report["regimes"][0]["value"] == report["regimes"][1]["value"]);

  const double pi = report["regimes"][0]["improvement_fraction"].get<double>();
  const auto bw = default_bandwidths(input.dataset, 1.0, 1.0);
  const auto regime = Regime::parametric({LinkFamily::logistic, 3.0}, beta);
  CHECK(pi == improvement_fraction(input.dataset, regime, bw, build_residual_weight(input.dataset),
                                   make_time_transform(3.0)));

  cfg.regimes = {"observed"};
  CHECK_THROWS_AS(cmd::cmd_evaluate(input, cfg), Error);
  cfg.regimes = {"observed", "constant:5"};
  CHECK_THROWS_AS(cmd::cmd_evaluate(input, cfg), Error);
  cfg.regimes = {"observed", "median"};
  CHECK_THROWS_AS(cmd::cmd_evaluate(input, cfg), Error);
}

TEST_CASE("cv command") {
  const auto input = simulated_input(120, 21);
  io::RunConfig cfg;
  cfg.cv.folds = 2;
  cfg.cv.grid = {{1.0, 1.0}};
  cfg.output_dir = scratch("cv_one").string();
  const auto one = cmd::cmd_cv(input, cfg);
  CHECK(one["selected"]["gamma1"] == 1.0);
  CHECK(one["table"].size() == 1);

  cfg.cv.grid = {{0.5, 1.0}, {1.0, 1.0}, {2.0, 0.75}};
  cfg.output_dir = scratch("cv_three").string();
  const auto three = cmd::cmd_cv(input, cfg);
  CHECK(three["table"].size() == 3);
  const std::string table = slurp(fs::path(cfg.output_dir) / "cv_table.csv");
  CHECK(table.rfind("gamma1,gamma2,score,fold1,fold2\n", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);
  cfg.output_dir = scratch("cv_three_again").string();
  CHECK(without_metadata(cmd::cmd_cv(input, cfg)) == without_metadata(three));
}

TEST_CASE("simulate smoke run") {
  io::SimulateConfig cfg;
  cfg.replication.replications = 2;
  cfg.replication.bootstrap = 2;
  cfg.replication.seed = 2024;
  cfg.replication.constant_grid = 40;
  cfg.scenarios = {ScenarioConfig{}};
  cfg.output_dir = scratch("sim_a").string();
  const auto manifest = cmd::cmd_simulate(cfg);
  CHECK(manifest["scenarios"][0]["v0"].get<double>() == Approx(19.155).margin(5e-4));
  const std::string metrics = slurp(fs::path(cfg.output_dir) / "metrics.csv");
  CHECK(metrics.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 5);
  CHECK(metrics.find(",V0,") != std::string::npos);
  CHECK(fs::exists(fs::path(cfg.output_dir) / "cohort_m1_0.2_3_a1.csv"));
  CHECK(fs::exists(fs::path(cfg.output_dir) / "replicates.csv"));

  const auto first_dir = cfg.output_dir;
  cfg.output_dir = scratch("sim_b").string();
  cfg.replication.threads = 3;
  const auto again = cmd::cmd_simulate(cfg);
  CHECK(slurp(fs::path(cfg.output_dir) / "metrics.csv") == metrics);
  CHECK(slurp(fs::path(cfg.output_dir) / "replicates.csv") == slurp(fs::path(first_dir) / "replicates.csv"));
  CHECK(without_metadata(again) == without_metadata(manifest));
}
