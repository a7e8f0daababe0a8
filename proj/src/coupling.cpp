#include "pdmp/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "pdmp/parallel.hpp"
#include "pdmp/samplers.hpp"

namespace pdmp {

namespace {

struct Proposal {
  double t;
  Vec h, theta;
  Vec z_own, z_other;
  double p_own, p_other;
  int j;
};

// Full one-step proposal from x_own's kernel, mirrored onto x_other.
Proposal propose(const ModelSpec& spec, Stream& s, const HybridState& own,
                 const HybridState& other) {
  Proposal pr;
  pr.t = sample_holding_time(s, spec.jump_rate);
  pr.h = sample_perturbation(spec.perturbation, spec.dim, s);
  const Vec s_own = flow(spec, own.i, pr.t, own.y);
  const Vec s_other = flow(spec, other.i, pr.t, other.y);
  pr.theta = sample_theta(spec, s, s_own);
  pr.p_own = spec.jump_density(s_own, pr.theta);
  pr.p_other = spec.jump_density(s_other, pr.theta);
  pr.z_own = spec.jump_map(pr.theta, s_own) + pr.h;
  pr.z_other = spec.jump_map(pr.theta, s_other) + pr.h;
  pr.j = -1;
  return pr;
}

double switch_ratio(const ModelSpec& spec, const HybridState& own, const HybridState& other,
                    const Proposal& pr) {
  const double a = spec.pi(own.i, pr.j, pr.z_own);
  const double b = spec.pi(other.i, pr.j, pr.z_other);
  return a > 0.0 ? std::min(a, b) / a : 0.0;
}

HybridState residual_coordinate(const ModelSpec& spec, Stream& s, const HybridState& own,
                                const HybridState& other) {
  for (long attempt = 0; attempt < 1000000; ++attempt) {
    Proposal pr = propose(spec, s, own, other);
    pr.j = sample_regime(spec, s, own.i, pr.z_own);
    const double acc =
        std::min(pr.p_own, pr.p_other) / pr.p_own * switch_ratio(spec, own, other, pr);
    if (s.uniform() >= acc) return {pr.z_own, pr.j};
  }
  throw ResidualMassError("no rejection in 10^6 proposals: coupling mass is numerically 1");
}

}  // namespace

std::optional<QSample> sample_Q(const ModelSpec& spec, Stream& s, const HybridState& x1,
                                const HybridState& x2) {
  Proposal pr = propose(spec, s, x1, x2);
  if (s.uniform() * pr.p_own >= std::min(pr.p_own, pr.p_other)) return std::nullopt;
  double row = 0.0;
  for (int j = 0; j < spec.regimes; ++j) row += spec.pi(x1.i, j, pr.z_own);
  if (!(row > 0.0)) throw SpecError("switching row " + std::to_string(x1.i + 1) + " is zero");
  pr.j = sample_regime(spec, s, x1.i, pr.z_own);
  if (spec.regimes > 1) {
    const double a = spec.pi(x1.i, pr.j, pr.z_own);
    const double b = spec.pi(x2.i, pr.j, pr.z_other);
    if (s.uniform() * a >= std::min(a, b)) return std::nullopt;
  }
  QSample out;
  out.next = {{pr.z_own, pr.j}, {pr.z_other, pr.j}};
  out.draws = {pr.t, pr.h, pr.theta, pr.j};
  return out;
}

CoupledState sample_residual(const ModelSpec& spec, Stream& s, const HybridState& x1,
                             const HybridState& x2) {
  CoupledState out;
  out.x1 = residual_coordinate(spec, s, x1, x2);
  out.x2 = residual_coordinate(spec, s, x2, x1);
  return out;
}

CoupledStepRecord coupled_step(const ModelSpec& spec, Stream& s, const CoupledState& cs) {
  CoupledStepRecord rec;
  if (auto q = sample_Q(spec, s, cs.x1, cs.x2)) {
    rec.next = std::move(q->next);
    rec.branch = Branch::via_Q;
    rec.shared = std::move(q->draws);
    return rec;
  }
  rec.next = sample_residual(spec, s, cs.x1, cs.x2);
  rec.branch = Branch::residual;
  return rec;
}

double lyapunov(const ModelSpec& spec, const HybridState& x) {
  return (x.y - spec.reference_point).norm();
}

bool in_F(const ModelSpec& spec, const AssumptionConstants& k, const CoupledState& cs) {
  return cs.x1.i == cs.x2.i || lyapunov(spec, cs.x1) + lyapunov(spec, cs.x2) < k.R;
}

bool in_K(const ModelSpec& spec, const AssumptionConstants& k, const CoupledState& cs) {
  return in_F(spec, k, cs) && lyapunov(spec, cs.x1) + lyapunov(spec, cs.x2) < k.R;
}

KappaResult coupling_time_kappa(const ModelSpec& spec, const AssumptionConstants& k, Stream& s,
                                const CoupledState& cs, long max_steps) {
  if (max_steps < 1) throw InputError("coupling_time_kappa: max_steps must be positive");
  CoupledState cur = cs;
  for (long n = 0; n <= max_steps; ++n) {
    if (in_K(spec, k, cur)) return {n, false};
    if (n == max_steps) break;
    cur = coupled_step(spec, s, cur).next;
  }
  return {max_steps, true};
}

KappaTail kappa_tail(const ModelSpec& spec, const AssumptionConstants& k, std::uint64_t seed,
                     const std::vector<CoupledState>& starts, long max_steps,
                     std::vector<double> zetas) {
  std::vector<KappaResult> res(starts.size());
  Stream master(seed);
  parallel_for(starts.size(), [&](std::size_t n) {
    Stream s = master.split(n);
    res[n] = coupling_time_kappa(spec, k, s, starts[n], max_steps);
  });
  KappaTail out;
  out.zetas = zetas;
  std::vector<double> ks;
  for (const auto& r : res) {
    ks.push_back(static_cast<double>(r.steps));
    if (r.censored) ++out.censored;
  }
  if (!ks.empty()) {
    std::vector<double> sorted = ks;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    out.median_kappa = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  }
  for (double z : zetas) {
    double sum = 0.0, sq = 0.0, h1 = 0.0, h2 = 0.0;
    const std::size_t m = ks.size();
    for (std::size_t n = 0; n < m; ++n) {
      const double v = std::pow(z, -ks[n]);
      sum += v;
      sq += v * v;
      (n < m / 2 ? h1 : h2) += v;
    }
    const double mean = m ? sum / m : 0.0;
    const double se = m ? std::sqrt(std::max(0.0, sq / m - mean * mean) / m) : 0.0;
    const double m1 = m / 2 ? h1 / (m / 2) : 0.0;
    const double m2 = m - m / 2 ? h2 / (m - m / 2) : 0.0;
    const bool stable = std::isfinite(mean) && out.censored == 0 && m >= 2 &&
                        std::abs(m1 - m2) <= 0.25 * mean;
    out.mean.push_back(mean);
    out.se.push_back(se);
    out.stable.push_back(stable);
  }
  for (std::size_t q = 0; q < zetas.size(); ++q)
    if (out.stable[q] && (out.smallest_stable_zeta == 0.0 || zetas[q] < out.smallest_stable_zeta))
      out.smallest_stable_zeta = zetas[q];
  return out;
}

std::vector<DriftRow> drift_check(const ModelSpec& spec, const AssumptionConstants& k,
                                  std::uint64_t seed, const std::vector<HybridState>& states,
                                  long draws) {
  std::vector<DriftRow> rows(states.size());
  Stream master(seed);
  parallel_for(states.size(), [&](std::size_t n) {
    Stream s = master.split(n);
    const HybridState& x = states[n];
    double sum = 0.0, sq = 0.0;
    for (long m = 0; m < draws; ++m) {
      const double v = lyapunov(spec, chain_step(spec, s, x));
      sum += v;
      sq += v * v;
    }
    DriftRow& r = rows[n];
    r.x = x;
    r.pv = sum / draws;
    r.se = std::sqrt(std::max(0.0, sq / draws - r.pv * r.pv) / draws);
    r.bound = k.a * lyapunov(spec, x) + k.b;
    r.pass = r.pv <= r.bound + 3.0 * r.se;
  });
  return rows;
}

PairStats q_pair_stats(const ModelSpec& spec, const AssumptionConstants& k, Stream& s,
                       const CoupledState& cs, long draws) {
  const double rho = rho_c(cs.x1, cs.x2, k.c);
  double d1 = 0, d2 = 0, a1 = 0, u1 = 0;
  bool support = true;
  for (long m = 0; m < draws; ++m) {
    auto q = sample_Q(spec, s, cs.x1, cs.x2);
    if (!q) continue;
    const double d = rho_c(q->next.x1, q->next.x2, k.c);
    d1 += d;
    d2 += d * d;
    a1 += 1.0;
    if (d <= k.q() * rho) u1 += 1.0;
    if (!in_F(spec, k, q->next)) support = false;
  }
  const double n = static_cast<double>(draws);
  PairStats st{};
  st.contraction = d1 / n;
  st.contraction_se = std::sqrt(std::max(0.0, d2 / n - st.contraction * st.contraction) / n);
  st.mass = a1 / n;
  st.mass_se = std::sqrt(st.mass * (1.0 - st.mass) / n);
  st.small_set = u1 / n;
  st.small_set_se = std::sqrt(st.small_set * (1.0 - st.small_set) / n);
  st.support_ok = support;
  return st;
}

std::vector<CoupledState> sample_F_pairs(const ModelSpec& spec, const AssumptionConstants& k,
                                         Stream& s, int n) {
  std::vector<CoupledState> out;
  const int uniform_half = n - n / 2;
  const auto N = static_cast<std::size_t>(spec.regimes);
  while (static_cast<int>(out.size()) < uniform_half) {
    auto ys = sample_states(spec, s, k.R, 2);
    HybridState x1{ys[0], static_cast<int>(s.index(N))};
    HybridState x2{ys[1], static_cast<int>(s.index(N))};
    CoupledState cs{x1, x2};
    if (in_K(spec, k, cs)) out.push_back(cs);
  }
  HybridState a{spec.reference_point, 0}, b{spec.reference_point, 0};
  for (int m = 0; m < 200; ++m) {
    a = chain_step(spec, s, a);
    b = chain_step(spec, s, b);
  }
  while (static_cast<int>(out.size()) < n) {
    for (int m = 0; m < 10; ++m) {
      a = chain_step(spec, s, a);
      b = chain_step(spec, s, b);
    }
    CoupledState cs{a, b};
    if (!in_F(spec, k, cs)) cs.x2.i = cs.x1.i;
    out.push_back(cs);
  }
  return out;
}

bool CouplingReport::all_pass() const {
  for (const auto& c : conditions)
    if (c.verdict != Verdict::pass) return false;
  return true;
}

CouplingReport verify_B_conditions(const ModelSpec& spec, const AssumptionConstants& k,
                                   std::uint64_t seed, const CouplingBudget& budget) {
  CouplingReport rep;
  Stream s(seed);

  std::vector<HybridState> states;
  for (const Vec& y : sample_states(spec, s, k.M, budget.states))
    states.push_back({y, static_cast<int>(s.index(static_cast<std::size_t>(spec.regimes)))});
  rep.drift_rows = drift_check(spec, k, s.bits(), states, budget.draws);

  const auto pairs = sample_F_pairs(spec, k, s, budget.pairs);
  rep.pair_rows.resize(pairs.size());
  Stream pair_master(s.bits());
  parallel_for(pairs.size(), [&](std::size_t n) {
    Stream ps = pair_master.split(n);
    PairRow& r = rep.pair_rows[n];
    r.pair = pairs[n];
    r.rho = rho_c(pairs[n].x1, pairs[n].x2, k.c);
    PairStats st = q_pair_stats(spec, k, ps, pairs[n], budget.draws);
    r.contraction = st.contraction;
    r.contraction_se = st.contraction_se;
    r.mass = st.mass;
    r.mass_se = st.mass_se;
    r.small_set = st.small_set;
    r.small_set_se = st.small_set_se;
    r.support_ok = st.support_ok;
    r.contraction_ok = r.contraction <= k.q() * r.rho + 3.0 * r.contraction_se + 1e-12;
    r.small_set_ok = r.small_set >= k.delta() - 3.0 * r.small_set_se - 1e-12;
    r.mass_ok = 1.0 - r.mass <= k.l() * r.rho + 3.0 * r.mass_se + 1e-12;
  });

  const long per = budget.draws;
  auto verdict = [](bool ok) { return ok ? Verdict::pass : Verdict::fail; };
  {
    ConditionVerdict v{"drift", Verdict::pass, -1e300, 0.0, 0, "max over states of P V - (a V + b), in se units"};
    bool ok = true;
    for (const auto& r : rep.drift_rows) {
      ok = ok && r.pass;
      const double z = r.se > 0 ? (r.pv - r.bound) / r.se : (r.pv - r.bound);
      v.worst = std::max(v.worst, z);
      v.samples += per;
    }
    v.bound = 3.0;
    v.verdict = verdict(ok);
    rep.conditions.push_back(v);
  }
  {
    ConditionVerdict v{"coupling_support", Verdict::pass, 0.0, 0.0, 0, "Q outputs with unequal regimes and V sum >= R"};
    bool ok = true;
    for (const auto& r : rep.pair_rows) {
      ok = ok && r.support_ok;
      v.samples += per;
    }
    v.worst = ok ? 0.0 : 1.0;
    v.verdict = verdict(ok);
    rep.conditions.push_back(v);
  }
  {
    ConditionVerdict v{"contraction", Verdict::pass, 0.0, k.q(), 0, "max E[rho_c(Q outputs) 1{accept}] / rho_c(pair)"};
    bool ok = true;
    for (const auto& r : rep.pair_rows) {
      ok = ok && r.contraction_ok;
      if (r.rho > 0) v.worst = std::max(v.worst, r.contraction / r.rho);
      v.samples += per;
    }
    v.verdict = verdict(ok);
    rep.conditions.push_back(v);
  }
  {
    ConditionVerdict v{"small_set_mass", Verdict::pass, 1e300, k.delta(), 0, "min Q mass of {rho_c(outputs) <= q rho_c(pair)}"};
    bool ok = true;
    for (const auto& r : rep.pair_rows) {
      ok = ok && r.small_set_ok;
      v.worst = std::min(v.worst, r.small_set);
      v.samples += per;
    }
    v.verdict = verdict(ok);
    rep.conditions.push_back(v);
  }
  {
    ConditionVerdict v{"coupling_mass", Verdict::pass, 0.0, k.l(), 0, "max (1 - Q mass) / rho_c(pair)"};
    bool ok = true;
    for (const auto& r : rep.pair_rows) {
      ok = ok && r.mass_ok;
      if (r.rho > 0) v.worst = std::max(v.worst, (1.0 - r.mass) / r.rho);
      v.samples += per;
    }
    v.verdict = verdict(ok);
    rep.conditions.push_back(v);
  }
  return rep;
}

std::string coupling_report_text(const CouplingReport& r) {
  std::ostringstream os;
  for (const auto& c : r.conditions) {
    os << c.name << ".verdict = " << to_string(c.verdict) << "\n";
    os << c.name << ".worst = " << fmt(c.worst) << "\n";
    os << c.name << ".bound = " << fmt(c.bound) << "\n";
    os << c.name << ".samples = " << c.samples << "\n";
    os << c.name << ".note = " << c.note << "\n";
  }
  os << "all_pass = " << (r.all_pass() ? "true" : "false") << "\n";
  return os.str();
}

static void put_state(std::ostream& os, const HybridState& x) {
  os << '"';
  for (Eigen::Index k = 0; k < x.y.size(); ++k) os << (k ? " " : "") << fmt(x.y[k]);
  os << "\"," << x.i + 1;
}

void write_pair_csv(std::ostream& os, const CouplingReport& r, const std::string& spec_hash,
                    std::uint64_t seed) {
  os << "# spec_hash=" << spec_hash << " seed=" << seed << "\n";
  os << "pair,y1,i1,y2,i2,rho,contraction,contraction_se,mass,mass_se,small_set,small_set_se,"
        "support_ok,contraction_ok,small_set_ok,mass_ok\n";
  for (std::size_t n = 0; n < r.pair_rows.size(); ++n) {
    const auto& p = r.pair_rows[n];
    os << n << ',';
    put_state(os, p.pair.x1);
    os << ',';
    put_state(os, p.pair.x2);
    os << ',' << fmt(p.rho) << ',' << fmt(p.contraction) << ',' << fmt(p.contraction_se) << ','
       << fmt(p.mass) << ',' << fmt(p.mass_se) << ',' << fmt(p.small_set) << ','
       << fmt(p.small_set_se) << ',' << p.support_ok << ',' << p.contraction_ok << ','
       << p.small_set_ok << ',' << p.mass_ok << '\n';
  }
}

}  // namespace pdmp
