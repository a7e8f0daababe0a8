#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "fixtures.hpp"
#include "pdmp/ergodic.hpp"
#include "pdmp/errors.hpp"

using namespace pdmp;

namespace {
double mean_y0(const EmpiricalMeasure& mu) {
  return integrate(mu, [](const Vec& y, int) { return y[0]; });
}
}  // namespace

TEST_CASE("invariant estimates of the 1-d gene model match the stationary means") {
  // rate 1, lam 1, theta ~ U[0,1], no perturbation: the post-jump chain has
  // mean E theta / (1 - lam / (lam + a)) = 1 and the process has lam E theta / a = 0.5
  const auto g = fixtures::gene(1, 2.0, 1.0, 0.0);
  const HybridState x0{Vec::Zero(1), 0};
  Stream s(21);
  const auto chain = estimate_invariant_chain(g.spec, s, x0, 1000, 40000, 5, 1.0);
  CHECK(chain.size() == 40000);
  CHECK(std::abs(mean_y0(chain) - 1.0) < 0.02);
  const auto times = equally_spaced_times(50.0, 40050.0, 40000);
  const auto path = estimate_invariant_pdmp(g.spec, s, x0, 40050.0, times, 1.0);
  CHECK(std::abs(mean_y0(path) - 0.5) < 0.02);
  for (const auto& p : path.points) CHECK(p.y[0] >= 0.0);
}

TEST_CASE("sample time grids") {
  const auto t = equally_spaced_times(10.0, 20.0, 5);
  REQUIRE(t.size() == 5);
  CHECK(t.front() > 10.0);
  CHECK(t.back() == doctest::Approx(20.0));
  Stream s(22);
  const auto e = exponential_times(s, 10.0, 20.0, 50);
  for (std::size_t k = 1; k < e.size(); ++k) CHECK(e[k] > e[k - 1]);
  for (double x : e) {
    CHECK(x > 10.0);
    CHECK(x <= 20.0);
  }
  CHECK_THROWS_AS(equally_spaced_times(5.0, 5.0, 3), InputError);
}

TEST_CASE("one-step law matches G followed by W") {
  const auto g = fixtures::gene(2);
  Stream s(23);
  const auto r = check_P_equals_GW(g.spec, s, {Vec::Zero(2), 0}, 4000, 4.0, 0.06);
  CHECK(r.verdict("one_step_laws_match").pass);
  CHECK(r.verdict("regime_frequencies_match").pass);
  CHECK_THROWS_AS(check_P_equals_GW(g.spec, s, {Vec::Zero(2), 0}, 500, 4.0), PreconditionError);
}

TEST_CASE("two-jump mass of the expansion has the closed form") {
  const auto g = fixtures::gene(2);
  const auto one = constant_one();
  for (double t : {0.01, 0.05, 0.2}) {
    const double closed = -std::expm1(-t) - t * std::exp(-t);
    const double e = short_time_expansion(g.spec, one.f, {Vec{{0.4, 0.2}}, 0}, t, {}, 1);
    CHECK(1.0 - e == doctest::Approx(closed).epsilon(1e-9));
  }
}

TEST_CASE("short-time residual shrinks with t") {
  const auto g = fixtures::gene(2);
  ShortTimeOptions opt;
  opt.seeds = 3;
  opt.unit_observable = true;
  const auto r = short_time_check(g.spec, 24, constant_one(), {Vec{{0.4, 0.2}}, 0}, {0.05, 0.1, 0.2},
                                  10000, opt);
  CHECK(r.verdict("two_jump_mass").pass);
  CHECK_THROWS_AS(short_time_check(g.spec, 24, constant_one(), {Vec::Zero(2), 0}, {0.5}, 10000),
                  PreconditionError);
  CHECK_THROWS_AS(short_time_check(g.spec, 24, constant_one(), {Vec::Zero(2), 0}, {0.1}, 100),
                  PreconditionError);
}

TEST_CASE("martingale increments for f = 1 are centred exponentials") {
  const auto g = fixtures::gene(2);
  Stream s(25);
  const auto path = simulate_pdmp(g.spec, s, {Vec::Zero(2), 0}, 6000.0);
  const auto r = martingale_diagnostics(g.spec, path, constant_one(), 5000);
  CHECK(r.verdict("increment_mean_zero").pass);
  CHECK(r.scalar("increment_second_moment") == doctest::Approx(1.0).epsilon(0.08));
  CHECK(std::abs(cd_conv_gap(g.spec, path, constant_one().f, 1000.0)) < 1e-9);
  CHECK_THROWS_AS(martingale_diagnostics(g.spec, path, constant_one(), 50), PreconditionError);
}

TEST_CASE("chain running averages settle near the reference") {
  const auto g = fixtures::gene(1, 2.0, 1.0, 0.0);
  const auto f = min_one_norm();
  Stream s(26);
  const auto ref = estimate_invariant_chain(g.spec, s, {Vec::Zero(1), 0}, 1000, 200000, 1, 1.0);
  const double reference = integrate(ref, [&](const Vec& y, int i) { return f.f(y, i); });
  SllnOptions opt;
  opt.replicas = 8;
  opt.tol = 0.03;
  const auto r = slln_chain(g.spec, 27, f, {Vec::Zero(1), 0}, {100, 1000, 10000}, reference, opt);
  CHECK(r.verdict("final_gap").pass);
  CHECK_THROWS_AS(slln_chain(g.spec, 27, f, {Vec::Zero(1), 0}, {10, 100}, reference, opt),
                  PreconditionError);
  CHECK_THROWS_AS(slln_chain(g.spec, 27, f, {Vec::Zero(1), 0}, {1000, 100}, reference, opt), InputError);
}

TEST_CASE("result files carry the digest header") {
  ExperimentResult r;
  r.name = "demo";
  r.digest = {{"spec_hash", "abc"}, {"seed", "9"}};
  r.add_scalar("x", 1.5, 0.1);
  r.add_verdict("ok", true, 1.0, 2.0);
  r.series.push_back({"rows", {"a", "b"}, {{1.0, 2.0}, {3.0, 4.0}}});
  const auto dir = std::filesystem::temp_directory_path() / "pdmp_test_result";
  std::filesystem::remove_all(dir);
  const auto files = r.write(dir, "demo");
  REQUIRE(files.size() == 2);
  std::ifstream csv(dir / "demo_rows.csv");
  std::string header, columns;
  std::getline(csv, header);
  std::getline(csv, columns);
  CHECK(header == "# spec_hash=abc seed=9");
  CHECK(columns == "a,b");
  CHECK(r.all_pass());
  CHECK(r.to_json().find("\"all_pass\": true") != std::string::npos);
  CHECK(r.scalar("x") == 1.5);
  CHECK_THROWS_AS(r.scalar("missing"), InputError);
  r.add_verdict("bad", false, 3.0, 2.0);
  CHECK_FALSE(r.all_pass());
  std::filesystem::remove_all(dir);
}

TEST_CASE("invariant estimators reject bad budgets") {
  const auto g = fixtures::gene(1);
  Stream s(28);
  CHECK_THROWS_AS(estimate_invariant_chain(g.spec, s, {Vec::Zero(1), 0}, 0, 0, 1, 1.0), PreconditionError);
  CHECK_THROWS_AS(estimate_invariant_chain(g.spec, s, {Vec::Zero(1), 0}, 0, 10, 0, 1.0), PreconditionError);
  CHECK_THROWS_AS(estimate_invariant_pdmp(g.spec, s, {Vec::Zero(1), 0}, 10.0, {}, 1.0), PreconditionError);
  CHECK_THROWS_AS(estimate_invariant_pdmp(g.spec, s, {Vec::Zero(1), 0}, 10.0, {5.0, 2.0}, 1.0),
                  PreconditionError);
  EmpiricalMeasure a{{{Vec::Zero(1), 0}}, {1.0}, 1.0};
  EmpiricalMeasure empty;
  CHECK_THROWS_AS(check_relation_G(g.spec, s, a, empty, 1, 0.03), PreconditionError);
}
