#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"

using namespace pdmp;

TEST_CASE("linear gene flow: closed form, fixed point at 0, agreement with RK4") {
  const auto g = fixtures::gene(2);
  for (double t : {0.0, 0.3, 1.0, 7.5}) CHECK(flow(g.spec, 0, t, Vec::Zero(2)).norm() == 0.0);
  Stream s(1);
  for (int k = 0; k < 50; ++k) {
    const Vec y = 5.0 * Vec{{s.uniform(), s.uniform()}};
    const double t = 3.0 * s.uniform();
    const Vec exact = flow(g.spec, 0, t, y);
    CHECK(exact[0] == doctest::Approx(std::exp(-t) * y[0]));
    CHECK(exact[1] == doctest::Approx(std::exp(-2.0 * t) * y[1]));
    CHECK((rk4_flow(g.spec.flows[0].field, t, y) - exact).norm() <= 1e-8);
  }
  CHECK_THROWS_AS(flow(g.spec, 0, -1.0, Vec::Zero(2)), InputError);
}

TEST_CASE("a flow leaving the state set is reported") {
  auto g = fixtures::gene(1);
  ModelSpec spec = g.spec;
  spec.flows[0] = Flow{nullptr, [](const Vec&) -> Vec { return Vec::Constant(1, -1.0); }};
  CHECK_THROWS_AS(flow(spec, 0, 2.0, Vec::Constant(1, 0.5)), FlowDomainError);
}

TEST_CASE("holding times are exponential with mean 1/lambda") {
  Stream s(2);
  const int n = 200000;
  double acc = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = sample_holding_time(s, 2.5);
    acc += t;
    sq += t * t;
  }
  const double mean = acc / n;
  CHECK(std::abs(mean - 0.4) <= 4.0 * 0.4 / std::sqrt(n));
  CHECK(sq / n == doctest::Approx(2.0 * 0.16).epsilon(0.02));
}

TEST_CASE("burst sizes: uniform on the box, jump lands at w(S(t,0)) = theta within sqrt(d) Delta") {
  const auto g = fixtures::gene(2, 2.0, 1.0, 0.0);
  Stream s(3);
  Vec mean = Vec::Zero(2);
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const Vec th = sample_theta(g.spec, s, Vec::Zero(2));
    CHECK(th.minCoeff() >= 0.0);
    CHECK(th.maxCoeff() <= 1.0);
    const Vec w = g.spec.jump_map(th, flow(g.spec, 0, 0.7, Vec::Zero(2)));
    CHECK(w.norm() <= std::sqrt(2.0) + 1e-15);
    mean += th / n;
  }
  CHECK(std::abs(mean[0] - 0.5) <= 4.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(mean[1] - 0.5) <= 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("chain: n = 0 gives the start only, states stay nonnegative, replay is exact") {
  const auto g = fixtures::gene(2);
  Stream s0(4);
  const auto empty = simulate_chain(g.spec, s0, {Vec::Zero(2), 0}, 0);
  CHECK(empty.states.size() == 1);
  std::ostringstream os;
  write_trajectory_csv(os, empty, "h", 4);
  int lines = 0;
  for (char ch : os.str()) lines += ch == '\n';
  CHECK(lines == 3);  // header comment, column names, one row

  Stream s1(5), s2(5);
  const auto a = simulate_chain(g.spec, s1, {Vec::Zero(2), 0}, 5000);
  const auto b = simulate_chain(g.spec, s2, {Vec::Zero(2), 0}, 5000);
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    CHECK(a.states[k] == b.states[k]);
    CHECK(a.states[k].y.minCoeff() >= 0.0);
  }
  for (std::size_t k = 1; k < a.jump_times.size(); ++k) CHECK(a.jump_times[k] > a.jump_times[k - 1]);
}

TEST_CASE("PDMP path: interpolation follows the flow between jumps") {
  const auto g = fixtures::gene(2);
  Stream s(6);
  const auto path = simulate_pdmp(g.spec, s, {Vec{{1.0, 2.0}}, 0}, 50.0);
  const auto& ch = path.chain;
  CHECK(ch.jump_times.back() > 50.0);
  for (std::size_t k = 0; k + 1 < ch.jump_times.size() && ch.jump_times[k + 1] < 50.0; ++k) {
    const double mid = 0.5 * (ch.jump_times[k] + ch.jump_times[k + 1]);
    const auto x = evaluate(g.spec, path, mid);
    CHECK((x.y - flow(g.spec, 0, mid - ch.jump_times[k], ch.states[k].y)).norm() <= 1e-12);
    CHECK(count_jumps(path, mid) == k);
  }
  CHECK(evaluate(g.spec, path, 0.0).y == Vec{{1.0, 2.0}});
  CHECK_THROWS_AS(evaluate(g.spec, path, 60.0), InputError);
  CHECK(time_average(g.spec, path, [](const Vec&, int) { return 1.0; }, 40.0) == doctest::Approx(1.0));
}

TEST_CASE("G by Gauss-Laguerre matches the closed form lambda y / (lambda + a)") {
  const auto g = fixtures::gene(1, 2.0, 1.5);
  const StateFn f = [](const Vec& y, int) { return y[0]; };
  for (double y : {0.0, 0.5, 3.0}) {
    const double gf = apply_G_quadrature(g.spec, f, {Vec::Constant(1, y), 0});
    CHECK(gf == doctest::Approx(1.5 * y / 2.5).epsilon(1e-12));
  }
  // and Monte Carlo through sample_G agrees
  Stream s(7);
  double acc = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) acc += sample_G(g.spec, s, {Vec::Constant(1, 2.0), 0}).y[0];
  CHECK(std::abs(acc / n - 1.2) <= 0.01);
}

TEST_CASE("segment integral of the linear flow") {
  const auto g = fixtures::gene(1);
  const StateFn f = [](const Vec& y, int) { return y[0]; };
  // int_0^2 3 e^{-s} ds; Simpson with h = 0.05 is good to len h^4 max|f""|/180 ~ 2e-7
  CHECK(segment_integral(g.spec, Vec::Constant(1, 3.0), 0, 2.0, f) == doctest::Approx(3.0 * (1.0 - std::exp(-2.0))).epsilon(1e-6));
}

TEST_CASE("regime switching follows the rows") {
  const auto cfg = fixtures::switching();
  Stream s(8);
  const int n = 100000;
  int stay = 0;
  for (int k = 0; k < n; ++k) stay += sample_regime(cfg.spec, s, 0, Vec::Zero(2)) == 0;
  const double p = static_cast<double>(stay) / n;
  CHECK(std::abs(p - 0.3) <= 4.0 * std::sqrt(0.21 / n));
}

TEST_CASE("step record consistency: next state is the jump of the flowed state") {
  const auto cfg = fixtures::switching();
  Stream s(9);
  HybridState x{Vec{{0.5, -0.5}}, 1};
  for (int k = 0; k < 200; ++k) {
    const auto r = chain_step_record(cfg.spec, s, x);
    const Vec pre = flow(cfg.spec, x.i, r.dt, x.y);
    CHECK((r.next.y - (cfg.spec.jump_map(r.mark.theta, pre) + r.mark.h)).norm() <= 1e-12);
    CHECK(r.mark.h.norm() <= 0.05);
    x = r.next;
  }
}
