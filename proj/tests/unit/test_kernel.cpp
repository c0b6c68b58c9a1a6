#include <cmath>
#include <numeric>
#include <vector>

#include <catch_amalgamated.hpp>

#include "otir/kernel.hpp"
#include "otir/rng.hpp"
#include "support/oracles.hpp"

using namespace otir;
using Catch::Approx;

namespace {

CovariateSchema one_continuous() { return CovariateSchema({{"z", CovariateKind::continuous}}); }
CovariateSchema mixed() {
  return CovariateSchema({{"x1", CovariateKind::binary}, {"x2", CovariateKind::continuous}});
}

}  // namespace

TEST_CASE("covariate weight examples") {
  const double a[] = {0.7};
  CHECK(covariate_weight(a, a, Bandwidths{{1.0}, 1.0}, one_continuous()) == Approx(0.3989422804));

  const double xi[] = {1.0, 0.5};
  const double x[] = {1.0, 0.0};
  CHECK(covariate_weight(xi, x, Bandwidths{{0.5}, 1.0}, mixed()) == Approx(0.4839414490));

  const double other[] = {0.0, 0.5};
  CHECK(covariate_weight(other, x, Bandwidths{{0.5}, 1.0}, mixed()) == 0.0);
  CHECK(covariate_weight(other, other, Bandwidths{{0.5}, 1.0}, mixed()) > 0.0);
}

TEST_CASE("covariate weight rejects mismatched shapes") {
  const double xi[] = {1.0};
  const double x[] = {1.0, 0.0};
  CHECK_THROWS_AS(covariate_weight(xi, x, Bandwidths{{0.5}, 1.0}, mixed()), Error);
  CHECK_THROWS_AS(covariate_weight(x, x, Bandwidths{{}, 1.0}, mixed()), Error);
}

TEST_CASE("default bandwidths follow the n^-1/5 sd rule") {
  RandomStream rng(3);
  const auto d = oracle::random_cohort(rng, 600, false);
  const auto bw = default_bandwidths(d, 1.0, 1.0);

  std::vector<double> z, a;
  for (const auto& r : d.records()) {
    z.push_back(r.covariates[1]);
    if (r.init_time) a.push_back(*r.init_time);
  }
  auto sd = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
  };
  const double rate = std::pow(600.0, -0.2);
  CHECK(rate == Approx(0.2782).epsilon(1e-3));
  CHECK(bw.h1[0] == Approx(rate * sd(z)).epsilon(1e-12));
  CHECK(bw.h2 == Approx(rate * sd(a)).epsilon(1e-12));

  const auto bw2 = default_bandwidths(d, 2.0, 0.5);
  CHECK(bw2.h1[0] == Approx(2.0 * bw.h1[0]));
  CHECK(bw2.h2 == Approx(0.5 * bw.h2));
}

TEST_CASE("constant covariate column is degenerate") {
  std::vector<SubjectRecord> r;
  for (int i = 0; i < 5; ++i) r.push_back({{0.4}, 0.5 + 0.1 * i, 10.0, true});
  const auto d = validate_cohort(std::move(r), one_continuous(), {3.0, 30.0});
  try {
    default_bandwidths(d, 1.0, 1.0);
    FAIL("expected DegenerateVariance");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateVariance);
  }
}

TEST_CASE("density estimate examples") {
  const auto single = validate_cohort({{{0.2}, 1.0, 10.0, true}}, one_continuous(), {3.0, 30.0});
  const double at[] = {0.2};
  CHECK(density_estimate(single, at, Bandwidths{{1.0}, 1.0}) == Approx(0.3989422804));

  RandomStream rng(8);
  std::vector<SubjectRecord> r;
  for (int i = 0; i < 10000; ++i) r.push_back({{rng.bernoulli(0.5) ? 1.0 : 0.0, rng.normal()}, rng.uniform(0.0, 3.0), 10.0, true});
  const auto big = validate_cohort(std::move(r), mixed(), {3.0, 30.0});
  const auto bw = default_bandwidths(big, 1.0, 1.0);
  const double x0[] = {0.0, 0.0};
  const double x1[] = {1.0, 0.0};
  const double f = density_estimate(big, x0, bw) + density_estimate(big, x1, bw);
  CHECK(f >= 0.37);
  CHECK(f <= 0.43);

  // Integrates to one over the continuous grid, summed over binary levels.
  RandomStream rng2(9);
  const auto small = oracle::random_cohort(rng2, 40, false);
  const Bandwidths sbw{{0.4}, 0.3};
  double mass = 0.0;
  const double step = 0.01;
  for (double b : {0.0, 1.0})
    for (double z = -9.0; z <= 9.0; z += step) {
      const double p[] = {b, z};
      mass += density_estimate(small, p, sbw) * step;
    }
  CHECK(mass == Approx(1.0).margin(1e-3));
}

TEST_CASE("local mrl of a single long-lived record is tau - a0") {
  const auto d = validate_cohort({{{0.0}, 1.0, 40.0, true}}, one_continuous(), {3.0, 30.0});
  const auto w = residual_weight(censoring_km(d), d.window());
  const double x[] = {0.0};
  CHECK(local_mrl(d, w, 1.5, x, Bandwidths{{1.0}, 1.0}, make_time_transform(3.0)) == Approx(27.0));
}

TEST_CASE("local mrl matches the triple-loop oracle and stays in range") {
  RandomStream rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = oracle::random_cohort(rng, 10 + rng.index(60), rep % 2 == 1, 1 + rep % 2);
    const auto w = residual_weight(censoring_km(d), d.window());
    const auto g = make_time_transform(3.0);
    const auto bw = default_bandwidths(d, 1.0, 1.0);
    const auto o = oracle::make_surface(d, bw.h1, bw.h2);
    std::vector<std::vector<double>> points;
    for (std::size_t i = 0; i < 5; ++i) points.push_back(d[i].covariates);
    const LocalMrlSurface surface(d, w, bw, g, points);
    for (std::size_t j = 0; j < points.size(); ++j) {
      for (double a : {0.05, 0.7, 1.5, 2.2, 2.95}) {
        const double ref = oracle::local_mrl(o, a, points[j]);
        const double direct = local_mrl(d, w, a, points[j], bw, g);
        CHECK(std::abs(direct - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
        CHECK(std::abs(surface(j, a) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
        CHECK(direct >= 0.0);
        CHECK(direct <= w.max_value() * (1.0 + 1e-12));
      }
    }
  }
}

TEST_CASE("local mrl is invariant to record order") {
  RandomStream rng(4);
  const auto d = oracle::random_cohort(rng, 50, false);
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::reverse(idx.begin(), idx.end());
  const auto p = d.select(idx);
  const auto g = make_time_transform(3.0);
  const auto bw = default_bandwidths(d, 1.0, 1.0);
  const auto wd = residual_weight(censoring_km(d), d.window());
  const auto wp = residual_weight(censoring_km(p), p.window());
  const double x[] = {1.0, 0.2};
  CHECK(local_mrl(d, wd, 1.1, x, bw, g) == Approx(local_mrl(p, wp, 1.1, x, bw, g)).epsilon(1e-13));
}

TEST_CASE("empty kernel neighbourhood floors the denominator") {
  const auto d = validate_cohort({{{0.0}, 1.0, 40.0, true}}, one_continuous(), {3.0, 30.0});
  const auto w = residual_weight(censoring_km(d), d.window());
  const double far[] = {1e3};
  CHECK(local_mrl(d, w, 1.5, far, Bandwidths{{0.1}, 0.1}, make_time_transform(3.0)) == 0.0);
}
