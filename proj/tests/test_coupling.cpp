#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "pdmp/coupling.hpp"

using namespace pdmp;

TEST_CASE("Q accepts every diagonal pair and keeps it on the diagonal") {
  const auto cfg = fixtures::switching();
  Stream s(1);
  for (int k = 0; k < 5000; ++k) {
    const HybridState x{3.0 * Vec::Random(2), static_cast<int>(s.index(2))};
    const auto q = sample_Q(cfg.spec, s, x, x);
    REQUIRE(q);
    CHECK(q->next.x1 == q->next.x2);
  }
}

TEST_CASE("Q mass across regimes equals the row overlap") {
  // constant rows (0.3, 0.7) and (0.6, 0.4): min-sum 0.7, density identical
  const auto cfg = fixtures::switching();
  const auto k = derive_constants(cfg.spec, cfg.inputs);
  Stream s(2);
  const CoupledState cs{{Vec{{0.2, 0.1}}, 0}, {Vec{{-0.4, 0.3}}, 1}};
  const auto st = q_pair_stats(cfg.spec, k, s, cs, 100000);
  CHECK(std::abs(st.mass - 0.7) <= 4.0 * st.mass_se);
}

TEST_CASE("gene model contraction is lambda / (lambda + rate) along each axis") {
  const auto g = fixtures::gene(2);
  const auto k = derive_constants(g.spec, g.inputs);
  Stream s(3);
  const CoupledState along1{{Vec{{1.0, 0.5}}, 0}, {Vec{{2.0, 0.5}}, 0}};
  const auto a = q_pair_stats(g.spec, k, s, along1, 100000);
  CHECK(a.mass == 1.0);
  CHECK(std::abs(a.contraction - 0.5) <= 4.0 * a.contraction_se);  // tight: equals q rho
  const CoupledState along2{{Vec{{1.0, 0.5}}, 0}, {Vec{{1.0, 1.5}}, 0}};
  const auto b = q_pair_stats(g.spec, k, s, along2, 100000);
  CHECK(std::abs(b.contraction - 1.0 / 3.0) <= 4.0 * b.contraction_se);
}

namespace {
// Means of y and regime frequencies of both coordinates of B against
// independent single-chain draws.
double check_marginals(const ModelSpec& spec, const CoupledState& cs, std::uint64_t seed, int n) {
  Stream s(seed), t1(seed + 1), t2(seed + 2);
  Vec m1 = Vec::Zero(spec.dim), m2 = m1, r1 = m1, r2 = m1;
  Vec q1 = m1, q2 = m1, w1 = m1, w2 = m1;
  std::vector<double> f1(spec.regimes), f2(spec.regimes), g1(spec.regimes), g2(spec.regimes);
  int residual = 0;
  for (int k = 0; k < n; ++k) {
    const auto rec = coupled_step(spec, s, cs);
    residual += rec.branch == Branch::residual;
    const auto a = chain_step(spec, t1, cs.x1), b = chain_step(spec, t2, cs.x2);
    m1 += rec.next.x1.y;
    q1 += rec.next.x1.y.cwiseAbs2();
    m2 += rec.next.x2.y;
    q2 += rec.next.x2.y.cwiseAbs2();
    r1 += a.y;
    w1 += a.y.cwiseAbs2();
    r2 += b.y;
    w2 += b.y.cwiseAbs2();
    f1[rec.next.x1.i] += 1.0 / n;
    f2[rec.next.x2.i] += 1.0 / n;
    g1[a.i] += 1.0 / n;
    g2[b.i] += 1.0 / n;
  }
  for (int d = 0; d < spec.dim; ++d) {
    const double v1 = q1[d] / n - std::pow(m1[d] / n, 2), v2 = q2[d] / n - std::pow(m2[d] / n, 2);
    CHECK(std::abs(m1[d] - r1[d]) / n <= 4.5 * std::sqrt(2.0 * v1 / n));
    CHECK(std::abs(m2[d] - r2[d]) / n <= 4.5 * std::sqrt(2.0 * v2 / n));
  }
  for (int j = 0; j < spec.regimes; ++j) {
    CHECK(std::abs(f1[j] - g1[j]) <= 4.5 * std::sqrt(2.0 * 0.25 / n));
    CHECK(std::abs(f2[j] - g2[j]) <= 4.5 * std::sqrt(2.0 * 0.25 / n));
  }
  return static_cast<double>(residual) / n;
}
}  // namespace

TEST_CASE("each coordinate of the coupling moves like the chain") {
  const auto cfg = fixtures::switching();
  const double r = check_marginals(cfg.spec, {{Vec{{0.2, 0.1}}, 0}, {Vec{{-0.4, 0.3}}, 1}}, 10, 40000);
  CHECK(std::abs(r - 0.3) <= 4.5 * std::sqrt(0.21 / 40000));
  check_marginals(cfg.spec, {{Vec{{2.0, -1.0}}, 1}, {Vec{{-0.4, 0.3}}, 1}}, 20, 40000);

  // place-dependent bursts make the residual branch do real work
  OperonModel m;
  m.rates = Vec{{1.0, 2.0}};
  m.burst_upper = Vec::Ones(2);
  m.burst = {BurstKind::truncated_exponential, 1.0, 3.0};
  const auto g = build_operon_spec(m);
  CHECK(check_marginals(g.spec, {{Vec{{0.1, 0.1}}, 0}, {Vec{{4.0, 3.0}}, 0}}, 30, 40000) > 0.05);
}

TEST_CASE("residual sampler stops when the coupling mass is numerically one") {
  const auto g = fixtures::gene(2);
  Stream s(4);
  const HybridState x{Vec{{1.0, 1.0}}, 0};
  CHECK_THROWS_AS(sample_residual(g.spec, s, x, {Vec{{2.0, 1.0}}, 0}), ResidualMassError);
}

TEST_CASE("drift, kappa and the full condition report on the gene model") {
  const auto g = fixtures::gene(2);
  const auto k = derive_constants(g.spec, g.inputs);
  const auto rows = drift_check(g.spec, k, 5, {{Vec::Zero(2), 0}, {Vec{{3.0, 1.0}}, 0}}, 20000);
  for (const auto& r : rows) CHECK(r.pass);
  // P V(0) = E|theta + h|, below b
  CHECK(rows[0].pv <= k.b);

  Stream s(6);
  const CoupledState inside{{Vec::Zero(2), 0}, {Vec{{0.5, 0.5}}, 0}};
  CHECK(in_K(g.spec, k, inside));
  const auto kap = coupling_time_kappa(g.spec, k, s, inside, 100);
  CHECK(kap.steps == 0);
  CHECK_FALSE(kap.censored);
  const CoupledState far{{Vec::Zero(2), 0}, {Vec{{20.0, 20.0}}, 0}};
  CHECK_FALSE(in_K(g.spec, k, far));
  CHECK(coupling_time_kappa(g.spec, k, s, far, 1000).steps > 0);

  CouplingBudget b;
  b.pairs = 10;
  b.states = 10;
  b.draws = 4000;
  const auto rep = verify_B_conditions(g.spec, k, 7, b);
  INFO(coupling_report_text(rep));
  CHECK(rep.all_pass());
}

TEST_CASE("condition report on the two-regime model") {
  const auto cfg = fixtures::switching();
  const auto k = derive_constants(cfg.spec, cfg.inputs);
  CouplingBudget b;
  b.pairs = 10;
  b.states = 10;
  b.draws = 4000;
  const auto rep = verify_B_conditions(cfg.spec, k, 8, b);
  INFO(coupling_report_text(rep));
  CHECK(rep.all_pass());
  const auto tail = kappa_tail(cfg.spec, k, 9, std::vector<CoupledState>(50, {{Vec::Zero(2), 0}, {Vec{{30.0, 30.0}}, 1}}), 10000);
  CHECK(tail.censored == 0);
  CHECK(tail.median_kappa > 0.0);
}
