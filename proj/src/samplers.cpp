#include "pdmp/samplers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

#include "pdmp/quadrature.hpp"

namespace pdmp {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Vec rk4_flow(const std::function<Vec(const Vec&)>& field, double t, const Vec& y) {
  if (t <= 0.0) return y;
  const double h_max = std::min(0.01, t / 16.0);
  const auto n = static_cast<long>(std::ceil(t / h_max - 1e-12));
  const double h = t / static_cast<double>(n);
  Vec x = y;
  for (long k = 0; k < n; ++k) {
    Vec k1 = field(x);
    Vec k2 = field(x + 0.5 * h * k1);
    Vec k3 = field(x + 0.5 * h * k2);
    Vec k4 = field(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

Vec flow(const ModelSpec& spec, int i, double t, const Vec& y) {
  if (t < 0.0) throw InputError("flow: negative time");
  if (t == 0.0) return y;
  const Flow& f = spec.flows.at(static_cast<std::size_t>(i));
  Vec out = f.analytic ? f.analytic(t, y) : rk4_flow(f.field, t, y);
  if (!spec.contains(out))
    throw FlowDomainError("flow of regime " + std::to_string(i + 1) + " left the state set at t=" +
                          fmt(t));
  return out;
}

double sample_holding_time(Stream& s, double lambda) { return s.exponential(lambda); }

Vec sample_theta(const ModelSpec& spec, Stream& s, const Vec& y) {
  const auto m = spec.theta_upper.size();
  Vec theta(m);
  for (long attempt = 0; attempt < 1000000; ++attempt) {
    for (Eigen::Index k = 0; k < m; ++k) theta[k] = spec.theta_upper[k] * s.uniform();
    const double p = spec.jump_density(y, theta);
    if (p > spec.p_max * (1.0 + 1e-12))
      throw EnvelopeError("jump density " + fmt(p) + " exceeds p_max " + fmt(spec.p_max));
    if (s.uniform() * spec.p_max < p) return theta;
  }
  throw EnvelopeError("rejection sampler for theta exceeded 10^6 attempts");
}

JumpMark sample_jump(const ModelSpec& spec, Stream& s, const Vec& y_pre) {
  JumpMark m;
  m.theta = sample_theta(spec, s, y_pre);
  m.h = sample_perturbation(spec.perturbation, spec.dim, s);
  return m;
}

int sample_regime(const ModelSpec& spec, Stream& s, int i, const Vec& y) {
  if (spec.regimes == 1) return 0;
  const double u = s.uniform();
  double acc = 0.0;
  int last = i;
  for (int j = 0; j < spec.regimes; ++j) {
    const double p = spec.pi(i, j, y);
    if (p <= 0.0) continue;
    acc += p;
    last = j;
    if (u < acc) return j;
  }
  return last;
}

StepRecord chain_step_record(const ModelSpec& spec, Stream& s, const HybridState& x) {
  StepRecord r;
  r.dt = sample_holding_time(s, spec.jump_rate);
  Vec y_pre = flow(spec, x.i, r.dt, x.y);
  r.mark = sample_jump(spec, s, y_pre);
  r.next.y = spec.jump_map(r.mark.theta, y_pre) + r.mark.h;
  r.next.i = sample_regime(spec, s, x.i, r.next.y);
  return r;
}

HybridState chain_step(const ModelSpec& spec, Stream& s, const HybridState& x) {
  return chain_step_record(spec, s, x).next;
}

ChainTrajectory simulate_chain(const ModelSpec& spec, Stream& s, const HybridState& x0,
                               std::size_t n) {
  ChainTrajectory tr;
  tr.states.reserve(n + 1);
  tr.jump_times.reserve(n + 1);
  tr.marks.reserve(n);
  tr.states.push_back(x0);
  tr.jump_times.push_back(0.0);
  for (std::size_t k = 0; k < n; ++k) {
    StepRecord r = chain_step_record(spec, s, tr.states.back());
    tr.jump_times.push_back(tr.jump_times.back() + r.dt);
    tr.states.push_back(std::move(r.next));
    tr.marks.push_back(std::move(r.mark));
  }
  return tr;
}

PdmpPath simulate_pdmp(const ModelSpec& spec, Stream& s, const HybridState& x0, double horizon) {
  if (!(horizon > 0.0)) throw InputError("simulate_pdmp: horizon must be positive");
  PdmpPath p;
  p.horizon = horizon;
  p.chain.states.push_back(x0);
  p.chain.jump_times.push_back(0.0);
  while (p.chain.jump_times.back() <= horizon) {
    StepRecord r = chain_step_record(spec, s, p.chain.states.back());
    p.chain.jump_times.push_back(p.chain.jump_times.back() + r.dt);
    p.chain.states.push_back(std::move(r.next));
    p.chain.marks.push_back(std::move(r.mark));
  }
  return p;
}

static std::size_t segment_index(const PdmpPath& path, double t) {
  const auto& tau = path.chain.jump_times;
  auto it = std::upper_bound(tau.begin(), tau.end(), t);
  return static_cast<std::size_t>(it - tau.begin()) - 1;
}

HybridState evaluate(const ModelSpec& spec, const PdmpPath& path, double t) {
  if (t < 0.0 || t > path.chain.jump_times.back())
    throw InputError("evaluate: time outside the simulated path");
  const std::size_t n = segment_index(path, t);
  const HybridState& x = path.chain.states[n];
  return {flow(spec, x.i, t - path.chain.jump_times[n], x.y), x.i};
}

std::size_t count_jumps(const PdmpPath& path, double t) { return segment_index(path, t); }

HybridState sample_G(const ModelSpec& spec, Stream& s, const HybridState& x) {
  const double t = sample_holding_time(s, spec.jump_rate);
  return {flow(spec, x.i, t, x.y), x.i};
}

HybridState sample_W(const ModelSpec& spec, Stream& s, const HybridState& x) {
  JumpMark m = sample_jump(spec, s, x.y);
  HybridState out;
  out.y = spec.jump_map(m.theta, x.y) + m.h;
  out.i = sample_regime(spec, s, x.i, out.y);
  return out;
}

double apply_G_quadrature(const ModelSpec& spec, const StateFn& f, const HybridState& x,
                          int nodes) {
  if (nodes < 8) throw InputError("apply_G_quadrature: at least 8 nodes");
  const auto& rule = laguerre_rule(nodes);
  double acc = 0.0;
  for (int k = 0; k < nodes; ++k)
    acc += rule.weights[k] * f(flow(spec, x.i, rule.nodes[k] / spec.jump_rate, x.y), x.i);
  return acc;
}

double segment_integral(const ModelSpec& spec, const Vec& y, int i, double len, const StateFn& f) {
  if (len <= 0.0) return 0.0;
  long n = std::max(8L, static_cast<long>(std::ceil(len / 0.05 - 1e-12)));
  if (n % 2) ++n;
  const double h = len / static_cast<double>(n);
  const bool closed = static_cast<bool>(spec.flows.at(static_cast<std::size_t>(i)).analytic);
  double acc = f(y, i);
  Vec cur = y;
  for (long k = 1; k <= n; ++k) {
    cur = closed ? flow(spec, i, k * h, y) : flow(spec, i, h, cur);
    const double w = (k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += w * f(cur, i);
  }
  return acc * h / 3.0;
}

double time_average(const ModelSpec& spec, const PdmpPath& path, const StateFn& f, double t) {
  if (!(t > 0.0) || t > path.chain.jump_times.back())
    throw InputError("time_average: horizon outside the simulated path");
  const auto& tau = path.chain.jump_times;
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < tau.size() && tau[k] < t; ++k) {
    const double len = std::min(tau[k + 1], t) - tau[k];
    const HybridState& x = path.chain.states[k];
    acc += segment_integral(spec, x.y, x.i, len, f);
  }
  return acc / t;
}

void write_trajectory_csv(std::ostream& os, const ChainTrajectory& traj,
                          const std::string& spec_hash, std::uint64_t seed) {
  const long d = traj.states.empty() ? 0 : traj.states.front().y.size();
  const long m = traj.marks.empty() ? 0 : traj.marks.front().theta.size();
  os << "# spec_hash=" << spec_hash << " seed=" << seed << "\n";
  os << "k,tau,dtau";
  for (long j = 0; j < m; ++j) os << ",theta_" << j + 1;
  for (long j = 0; j < d; ++j) os << ",h_" << j + 1;
  for (long j = 0; j < d; ++j) os << ",y_" << j + 1;
  os << ",xi\n";
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const double dtau = k ? traj.jump_times[k] - traj.jump_times[k - 1] : 0.0;
    os << k << ',' << fmt(traj.jump_times[k]) << ',' << fmt(dtau);
    for (long j = 0; j < m; ++j) os << ',' << (k ? fmt(traj.marks[k - 1].theta[j]) : "");
    for (long j = 0; j < d; ++j) os << ',' << (k ? fmt(traj.marks[k - 1].h[j]) : "");
    for (long j = 0; j < d; ++j) os << ',' << fmt(traj.states[k].y[j]);
    os << ',' << traj.states[k].i + 1 << '\n';
  }
}

}  // namespace pdmp
