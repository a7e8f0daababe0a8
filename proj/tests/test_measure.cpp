#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pdmp/errors.hpp"
#include "pdmp/measure.hpp"
#include "pdmp/random.hpp"

using namespace pdmp;

namespace {
EmpiricalMeasure point(Vec y, int i, double c) { return {{{std::move(y), i}}, {1.0}, c}; }

EmpiricalMeasure random_measure(Stream& s, int n, int dim, int regimes, double c, double spread) {
  EmpiricalMeasure mu;
  mu.c = c;
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    Vec y(dim);
    for (int j = 0; j < dim; ++j) y[j] = spread * (2.0 * s.uniform() - 1.0);
    mu.points.push_back({y, static_cast<int>(s.index(regimes))});
    mu.weights.push_back(0.1 + s.uniform());
    total += mu.weights.back();
  }
  for (double& w : mu.weights) w /= total;
  return mu;
}

// W1 on the line, which equals FM when the support has diameter <= 2
double w1_line(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  std::vector<std::pair<double, double>> ev;
  for (std::size_t k = 0; k < a.size(); ++k) ev.push_back({a.points[k].y[0], a.weights[k]});
  for (std::size_t k = 0; k < b.size(); ++k) ev.push_back({b.points[k].y[0], -b.weights[k]});
  std::sort(ev.begin(), ev.end());
  double cdf = 0.0, acc = 0.0;
  for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
    cdf += ev[k].second;
    acc += std::abs(cdf) * (ev[k + 1].first - ev[k].first);
  }
  return acc;
}
}  // namespace

TEST_CASE("FM distance between point masses is min(2, rho)") {
  const double c = 0.7;
  CHECK(fm_distance_exact(point(Vec{{0.0, 0.0}}, 0, c), point(Vec{{0.3, 0.4}}, 0, c)) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fm_distance_exact(point(Vec{{0.0, 0.0}}, 0, c), point(Vec{{0.3, 0.4}}, 1, c)) ==
        doctest::Approx(1.2).epsilon(1e-12));
  CHECK(fm_distance_exact(point(Vec{{0.0, 0.0}}, 0, c), point(Vec{{3.0, 4.0}}, 0, c)) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fm_distance_exact(point(Vec{{1.0, 1.0}}, 2, c), point(Vec{{1.0, 1.0}}, 2, c)) == 0.0);
}

TEST_CASE("FM distance matches an independent LP solve") {
  // value from a generic LP solver on the dual with all pairwise constraints
  const double c = 0.7;
  EmpiricalMeasure a{{{Vec{{0.0, 0.0}}, 0}, {Vec{{1.0, 0.5}}, 1}, {Vec{{-0.5, 1.5}}, 2}, {Vec{{2.0, -1.0}}, 0}},
                     {0.2, 0.3, 0.1, 0.4}, c};
  EmpiricalMeasure b{{{Vec{{0.3, 0.1}}, 1}, {Vec{{1.1, 0.4}}, 1}, {Vec{{-2.0, 0.0}}, 2}, {Vec{{0.0, 3.0}}, 0}},
                     {0.25, 0.25, 0.3, 0.2}, c};
  CHECK(fm_distance_exact(a, b) == doctest::Approx(1.2789121810041877).epsilon(1e-9));
  CHECK(fm_solve_sparse(a, b).distance == doctest::Approx(1.2789121810041877).epsilon(1e-9));
}

TEST_CASE("FM distance equals W1 on the line for supports of diameter at most 2") {
  Stream s(5);
  for (int rep = 0; rep < 30; ++rep) {
    auto a = random_measure(s, 1 + static_cast<int>(s.index(20)), 1, 1, 1.0, 1.0);
    auto b = random_measure(s, 1 + static_cast<int>(s.index(20)), 1, 1, 1.0, 1.0);
    CHECK(fm_distance_exact(a, b) == doctest::Approx(w1_line(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("sparse certified solve agrees with the dense solve") {
  Stream s(6);
  for (int rep = 0; rep < 4; ++rep) {
    const auto a = random_measure(s, 200, 2, 3, 0.5, 2.0);
    const auto b = random_measure(s, 200, 2, 3, 0.5, 2.5);
    const auto dense = fm_solve_dense(a, b);
    const auto sparse = fm_solve_sparse(a, b, {4, 30});
    CHECK(sparse.certified);
    CHECK(sparse.distance == doctest::Approx(dense.distance).epsilon(1e-9));
    CHECK(sparse.arcs < dense.arcs);
  }
}

TEST_CASE("witness is feasible and attains the distance") {
  Stream s(7);
  const auto a = random_measure(s, 60, 2, 2, 0.8, 3.0);
  const auto b = random_measure(s, 70, 2, 2, 0.8, 3.0);
  const auto r = fm_solve_dense(a, b);
  REQUIRE(r.witness.size() == a.size() + b.size());
  std::vector<HybridState> pts = a.points;
  pts.insert(pts.end(), b.points.begin(), b.points.end());
  double val = 0.0;
  for (std::size_t u = 0; u < pts.size(); ++u) {
    CHECK(std::abs(r.witness[u]) <= 1.0 + 1e-9);
    for (std::size_t v = 0; v < pts.size(); ++v)
      CHECK(r.witness[u] - r.witness[v] <= rho_c(pts[u], pts[v], 0.8) + 1e-9);
    val += r.witness[u] * (u < a.size() ? a.weights[u] : -b.weights[u - a.size()]);
  }
  CHECK(val == doctest::Approx(r.distance).epsilon(1e-9));
}

TEST_CASE("FM distance is a metric on random measures") {
  Stream s(8);
  for (int rep = 0; rep < 15; ++rep) {
    const auto a = random_measure(s, 15, 2, 2, 1.0, 2.0);
    const auto b = random_measure(s, 15, 2, 2, 1.0, 2.0);
    const auto m = random_measure(s, 15, 2, 2, 1.0, 2.0);
    const double ab = fm_distance_exact(a, b), ba = fm_distance_exact(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-10));
    CHECK(ab <= fm_distance_exact(a, m) + fm_distance_exact(m, b) + 1e-10);
    CHECK(ab >= 0.0);
    CHECK(ab <= 2.0 + 1e-12);
    CHECK(fm_distance_exact(a, a) <= 1e-12);
  }
}

TEST_CASE("FM distance over 500 points requires the subsampled path") {
  Stream s(9);
  const auto a = random_measure(s, 260, 1, 1, 1.0, 1.0);
  const auto b = random_measure(s, 260, 1, 1, 1.0, 1.0);
  CHECK_THROWS_AS(fm_distance_exact(a, b), PreconditionError);
  const auto sub = fm_distance_subsampled(a, a, 3, 200, 3);
  CHECK(sub.runs.size() == 3);
  CHECK(sub.max <= 1e-12);  // paired index stream: identical measures stay identical
  const auto d = fm_distance_subsampled(a, b, 3, 200, 3);
  CHECK(d.min <= d.mean);
  CHECK(d.mean <= d.max);
}

TEST_CASE("dictionary bound never exceeds the exact distance") {
  Stream s(10);
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = random_measure(s, 40, 2, 2, 1.0, 2.0);
    const auto b = random_measure(s, 40, 2, 2, 1.0, 2.5);
    const double lo = fm_distance_dictionary(a, b, default_dictionary(a, b, 2));
    CHECK(lo <= fm_distance_exact(a, b) + 1e-10);
    CHECK(lo >= 0.0);
  }
}

TEST_CASE("dictionary rejects a function that is not 1-Lipschitz") {
  Stream s(11);
  const auto a = random_measure(s, 30, 1, 1, 1.0, 0.4);
  const auto b = random_measure(s, 30, 1, 1, 1.0, 0.4);
  const std::vector<TestFunction> dict{{"steep", [](const HybridState& x) { return std::tanh(3.0 * x.y[0]); }}};
  CHECK_THROWS_WITH_AS(fm_distance_dictionary(a, b, dict), doctest::Contains("steep"), InputError);
  const std::vector<TestFunction> big{{"big", [](const HybridState&) { return 1.5; }}};
  CHECK_THROWS_AS(fm_distance_dictionary(a, b, big), InputError);
}

TEST_CASE("Y-marginal distance is at most the joint distance") {
  Stream s(12);
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = random_measure(s, 25, 2, 3, 0.6, 2.0);
    const auto b = random_measure(s, 25, 2, 3, 0.6, 2.0);
    CHECK(fm_distance_exact(marginalize_Y(a), marginalize_Y(b)) <= fm_distance_exact(a, b) + 1e-10);
  }
}

TEST_CASE("marginalize_Y merges atoms that differ only in regime") {
  EmpiricalMeasure mu{{{Vec{{1.0}}, 0}, {Vec{{1.0}}, 1}, {Vec{{2.0}}, 1}}, {0.25, 0.25, 0.5}, 1.0};
  const auto m = marginalize_Y(mu);
  REQUIRE(m.size() == 2);
  double w1 = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k)
    if (m.points[k].y[0] == 1.0) w1 = m.weights[k];
  CHECK(w1 == doctest::Approx(0.5));
  m.validate();
}

TEST_CASE("lipschitz extension stays in the unit ball and interpolates") {
  Stream s(13);
  const double c = 0.9;
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = random_measure(s, 30, 2, 2, c, 2.0);
    const auto b = random_measure(s, 30, 2, 2, c, 2.0);
    const auto r = fm_solve_dense(a, b);
    std::vector<HybridState> pts = a.points;
    pts.insert(pts.end(), b.points.begin(), b.points.end());
    const auto ext = lipschitz_extension(pts, r.witness, c);
    for (std::size_t u = 0; u < pts.size(); ++u)
      CHECK(ext.f(pts[u]) == doctest::Approx(r.witness[u]).epsilon(1e-9));
    for (int k = 0; k < 200; ++k) {
      const HybridState x{3.0 * s.unit_ball(2), static_cast<int>(s.index(2))};
      const HybridState z{3.0 * s.unit_ball(2), static_cast<int>(s.index(2))};
      CHECK(std::abs(ext.f(x)) <= 1.0 + 1e-12);
      CHECK(std::abs(ext.f(x) - ext.f(z)) <= rho_c(x, z, c) + 1e-9);
    }
  }
}

TEST_CASE("geometric fit recovers exact rates") {
  std::vector<double> ns, ds;
  for (int n = 0; n < 10; ++n) {
    ns.push_back(n);
    ds.push_back(1.7 * std::pow(0.6, n));
  }
  const auto f = fit_geometric_rate(ns, ds);
  CHECK(f.beta == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(f.C == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));

  ds[9] = 0.0;
  const auto g = fit_geometric_rate(ns, ds, 1e-12);
  CHECK(g.floored[9]);
  CHECK_FALSE(g.floored[0]);

  CHECK_THROWS_AS(fit_geometric_rate({0, 1, 2, 3}, {1, 0.5, 0.25, 0.125}), InputError);
  CHECK_THROWS_AS(fit_geometric_rate({0, 1, 2, 3, 4}, {1, 0.5, 0.0, 0.125, 0.1}), InputError);
  CHECK_THROWS_AS(fit_geometric_rate({0, 1}, {1.0}), InputError);
}

TEST_CASE("measure validation reports bad weights") {
  EmpiricalMeasure mu{{{Vec{{0.0}}, 0}, {Vec{{1.0}}, 0}}, {0.5, 0.6}, 1.0};
  CHECK_THROWS_WITH_AS(mu.validate(), doctest::Contains("sum to"), InputError);
  mu.weights = {0.5};
  CHECK_THROWS_AS(mu.validate(), InputError);
  mu.weights = {1.5, -0.5};
  CHECK_THROWS_AS(mu.validate(), InputError);
  CHECK_THROWS_AS(fm_distance_exact(point(Vec{{0.0}}, 0, 1.0), point(Vec{{0.0}}, 0, 0.5)), InputError);
}
