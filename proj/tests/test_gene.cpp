#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "pdmp/errors.hpp"
#include "pdmp/gene.hpp"

using namespace pdmp;

namespace {
Vec diag_field(const Vec& a, const Vec& y) { return (a.array() * y.array()).matrix(); }
}  // namespace

TEST_CASE("dissipativity constant of linear degradation is the smallest rate") {
  const Vec a{{1.0, 3.0}};
  CHECK(verify_dissipativity([&](const Vec& y) { return diag_field(a, y); }, 2, 2000, 5.0) ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(verify_dissipativity([](const Vec& y) { return Vec(2.0 * y); }, 1, 1000, 5.0) ==
        doctest::Approx(2.0).epsilon(1e-9));
  const double nl =
      verify_dissipativity([](const Vec& y) { return Vec(y.array() + 0.1 * y.array().sin()); }, 2, 4000, 5.0);
  CHECK(nl >= 0.9 - 1e-9);
  CHECK(nl <= 1.1 + 1e-9);
}

TEST_CASE("a non-dissipative field is rejected") {
  CHECK_THROWS_AS(verify_dissipativity([](const Vec& y) { return Vec(-0.1 * y); }, 2, 1000, 5.0),
                  NotDissipative);
  CHECK_THROWS_AS(verify_dissipativity([](const Vec& y) { return Vec(y.array().sin()); }, 1, 1000, 5.0),
                  NotDissipative);
  OperonModel m;
  m.rates = Vec{{1.0, 0.0}};
  m.burst_upper = Vec::Ones(2);
  CHECK_THROWS_AS(build_operon_spec(m), SpecError);
}

TEST_CASE("nonlinear degradation certificate is spot-checked") {
  OperonModel m;
  m.burst_upper = Vec::Ones(2);
  m.degradation = [](const Vec& y) { return Vec(y.array() + 0.1 * y.array().sin()); };
  m.alpha_bar = 0.9;
  const auto ok = build_operon_spec(m);
  CHECK(ok.inputs.alpha == doctest::Approx(-0.9));
  Stream s(31);
  const auto p = simulate_pdmp(ok.spec, s, {Vec::Ones(2), 0}, 20.0);
  CHECK(evaluate(ok.spec, p, 20.0).y.minCoeff() >= 0.0);
  m.alpha_bar = 1.5;
  CHECK_THROWS_WITH_AS(build_operon_spec(m), doctest::Contains("alpha_bar"), SpecError);
}

TEST_CASE("flow contraction at the certified rate") {
  const auto g = fixtures::gene(2);
  const auto r = flow_contraction_check(g.spec, 1.0, 2000, {0.0, 0.5, std::log(2.0), 2.0});
  CHECK(r.pass);
  CHECK(r.rows.front().max_ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.max_ratio <= 1.0 + 1e-9);

  const auto eq = fixtures::gene(2, 1.0);
  const auto e = flow_contraction_check(eq.spec, 1.0, 500, {std::log(2.0)});
  CHECK(e.rows.front().max_ratio == doctest::Approx(1.0).epsilon(1e-9));

  // along e2 alone the ratio is e^{-t}
  const auto& S = g.spec.flows.front();
  const Vec y1{{1.0, 0.5}}, y2{{1.0, 2.5}};
  const double t = 0.7;
  CHECK((S.analytic(t, y1) - S.analytic(t, y2)).norm() * std::exp(t) / 2.0 == doctest::Approx(std::exp(-t)));

  const auto bad = flow_contraction_check(g.spec, 1.5, 500, {1.0});
  CHECK_FALSE(bad.pass);
}

TEST_CASE("constant bursts have zero Lipschitz constant and full overlap") {
  const auto d = default_burst_density({}, Vec{{1.0, 2.0}});
  CHECK(d.L_p == 0.0);
  CHECK(d.delta_p == 1.0);
  CHECK(d.p_max == doctest::Approx(0.5));
  CHECK(d.p(Vec::Zero(2), Vec{{0.5, 1.5}}) == doctest::Approx(0.5));
}

TEST_CASE("truncated exponential burst constants") {
  // reference values from adaptive quadrature of the beta = 1 and beta = 2
  // densities on [0, 1]
  const auto d = default_burst_density({BurstKind::truncated_exponential, 1.0, 2.0}, Vec::Ones(1));
  CHECK(d.delta_p == doctest::Approx(0.8844707106849976).epsilon(1e-6));
  CHECK(d.L_p == doctest::Approx(0.2416317120209306).epsilon(1e-6));
  CHECK(d.p_max == doctest::Approx(2.3130352854993315).epsilon(1e-12));
  for (double y : {0.0, 0.7, 10.0}) {
    double mass = 0.0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) mass += d.p(Vec{{y}}, Vec{{(k + 0.5) / n}}) / n;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
  // L1 distance between densities bounded by L_p |y1 - y2|
  const int n = 20000;
  for (auto [a, b] : {std::pair{0.0, 0.3}, std::pair{1.0, 4.0}}) {
    double l1 = 0.0;
    for (int k = 0; k < n; ++k) {
      const Vec th{{(k + 0.5) / n}};
      l1 += std::abs(d.p(Vec{{a}}, th) - d.p(Vec{{b}}, th)) / n;
    }
    CHECK(l1 <= d.L_p * (b - a) + 1e-9);
  }
  CHECK_THROWS_AS(default_burst_density({BurstKind::truncated_exponential, 2.0, 1.0}, Vec::Ones(1)),
                  InputError);
}

TEST_CASE("stationary level grows with the burst rate") {
  // rate 1, constant bursts on [0, 1]: stationary mean lam / 2
  double means[2];
  int k = 0;
  for (double lam : {0.5, 4.0}) {
    const auto g = fixtures::gene(1, 2.0, lam, 0.0);
    Stream s(32);
    const double h = 4000.0 / lam;
    const auto mu = estimate_invariant_pdmp(g.spec, s, {Vec::Zero(1), 0}, h + 50.0,
                                            equally_spaced_times(50.0, h + 50.0, 20000), 1.0);
    means[k++] = integrate(mu, [](const Vec& y, int) { return y[0]; });
  }
  CHECK(means[0] == doctest::Approx(0.25).epsilon(0.1));
  CHECK(means[1] == doctest::Approx(2.0).epsilon(0.1));
  CHECK(means[0] < means[1]);
}

TEST_CASE("jump map is an isometry and states stay nonnegative") {
  const auto g = fixtures::gene(3);
  Stream s(33);
  for (int k = 0; k < 1000; ++k) {
    const Vec y1 = 4.0 * Vec::Random(3).cwiseAbs(), y2 = 4.0 * Vec::Random(3).cwiseAbs();
    const Vec th = Vec::Random(3).cwiseAbs();
    CHECK((g.spec.jump_map(th, y1) - g.spec.jump_map(th, y2)).norm() ==
          doctest::Approx((y1 - y2).norm()).epsilon(1e-12));
  }
  const auto tr = simulate_chain(g.spec, s, {Vec::Zero(3), 0}, 5000);
  for (const auto& x : tr.states) CHECK(x.y.minCoeff() >= 0.0);
}

TEST_CASE("operon demo on a small budget") {
  const auto g = fixtures::gene(2);
  DemoBudget b;
  b.burn_in = 10.0;
  b.samples = 2000;
  b.horizon = 1010.0;
  b.slln_horizon = 2000.0;
  b.slln_replicas = 2;
  b.convergence_replicas = 300;
  b.checkpoints = {1, 2, 4, 8, 16};
  b.bins = 12;
  const auto res = operon_demo(g, 4.0, 34, b);
  REQUIRE(res.size() == 3);
  const auto& inv = res.front();
  CHECK(inv.name == "operon_invariant");
  CHECK(inv.scalar("mean_1") == doctest::Approx(0.5).epsilon(0.15));
  CHECK(inv.scalar("mean_2") == doctest::Approx(0.25).epsilon(0.15));
  int hist = 0;
  for (const auto& s : inv.series) {
    if (s.name.rfind("histogram_", 0) != 0) continue;
    ++hist;
    double mass = 0.0;
    for (const auto& r : s.rows) mass += r[2];
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.rows.size() == 12);
  }
  CHECK(hist == 2);
}
