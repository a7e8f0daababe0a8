#include "pdmp/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "pdmp/quadrature.hpp"
#include "pdmp/samplers.hpp"

namespace pdmp {

double rho_c(const HybridState& x1, const HybridState& x2, double c) {
  if (x1.y.size() != x2.y.size()) throw InputError("rho_c: dimension mismatch");
  if (!(c > 0.0)) throw InputError("rho_c: c must be positive");
  return rho_c(x1.y, x1.i, x2.y, x2.i, c);
}

double rho_bar_c(const HybridState& x1, const HybridState& x2, const HybridState& z1,
                 const HybridState& z2, double c) {
  return rho_c(x1, z1, c) + rho_c(x2, z2, c);
}

const char* to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::point: return "point";
    case PerturbationKind::ball: return "ball";
    case PerturbationKind::box: return "box";
  }
  return "?";
}

Vec sample_perturbation(const Perturbation& p, int dim, Stream& s) {
  switch (p.kind) {
    case PerturbationKind::point: return Vec::Zero(dim);
    case PerturbationKind::ball: return p.eps * s.unit_ball(dim);
    case PerturbationKind::box: {
      Vec h(dim);
      for (int k = 0; k < dim; ++k) h[k] = p.eps * s.uniform();
      return h;
    }
  }
  return Vec::Zero(dim);
}

double perturbation_radius(const Perturbation& p, int dim) {
  switch (p.kind) {
    case PerturbationKind::point: return 0.0;
    case PerturbationKind::ball: return p.eps;
    case PerturbationKind::box: return p.eps * std::sqrt(static_cast<double>(dim));
  }
  return 0.0;
}

std::vector<Vec> sample_states(const ModelSpec& spec, Stream& s, double radius, int n) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(n));
  long misses = 0;
  while (static_cast<int>(out.size()) < n) {
    Vec y = spec.reference_point + radius * s.unit_ball(spec.dim);
    if (spec.contains(y)) {
      out.push_back(std::move(y));
    } else if (++misses > 100000L * n) {
      throw SpecError("state set has negligible volume near the reference point");
    }
  }
  return out;
}

static int theta_nodes_for(long m) { return m <= 3 ? 16 : (m == 4 ? 8 : 4); }

void validate_spec(ModelSpec& spec, std::uint64_t seed, int samples) {
  if (spec.dim < 1) throw SpecError("dim must be positive");
  if (spec.regimes < 1) throw SpecError("regime count must be positive");
  if (static_cast<int>(spec.flows.size()) != spec.regimes)
    throw SpecError("one flow per regime is required");
  for (const auto& f : spec.flows)
    if (!f.analytic && !f.field) throw SpecError("flow without evaluator");
  if (!spec.jump_map || !spec.jump_density) throw SpecError("jump map and density are required");
  if (spec.theta_upper.size() < 1 || (spec.theta_upper.array() <= 0.0).any())
    throw SpecError("theta box must have positive sides");
  if (!(spec.jump_rate > 0.0)) throw SpecError("jump_rate must be positive");
  if (spec.reference_point.size() != spec.dim || !spec.contains(spec.reference_point))
    throw SpecError("reference point must lie in the state set");
  const auto& pert = spec.perturbation;
  if (pert.kind != PerturbationKind::point && !(pert.eps > 0.0))
    throw SpecError("perturbation eps must be positive");
  if (pert.eps < 0.0) throw SpecError("perturbation eps must be nonnegative");
  if (pert.eps_star > 0.0 && pert.eps > pert.eps_star)
    throw SpecError("perturbation eps exceeds the admissibility radius eps_star");

  Stream s(seed);
  auto states = sample_states(spec, s, 5.0 * (1.0 + spec.reference_point.norm()), samples);
  states.insert(states.begin(), spec.reference_point);
  const TensorGrid grid = box_grid(spec.theta_upper, theta_nodes_for(spec.theta_upper.size()));

  double p_seen = 0.0;
  for (const Vec& y : states) {
    for (int i = 0; i < spec.regimes; ++i) {
      double row = 0.0;
      for (int j = 0; j < spec.regimes; ++j) {
        const double p = spec.pi(i, j, y);
        if (p < 0.0) throw SpecError("switching row " + std::to_string(i + 1) + " has a negative entry");
        row += p;
      }
      if (std::abs(row - 1.0) > 1e-9)
        throw SpecError("switching row " + std::to_string(i + 1) + " sums to " + fmt(row));
    }
    double mass = 0.0;
    for (Eigen::Index k = 0; k < grid.weights.size(); ++k) {
      const double p = spec.jump_density(y, grid.points.col(k));
      if (p < 0.0) throw SpecError("jump density is negative");
      p_seen = std::max(p_seen, p);
      mass += grid.weights[k] * p;
    }
    if (std::abs(mass - 1.0) > 1e-6)
      throw SpecError("jump density integrates to " + fmt(mass) + " over theta");
  }
  if (spec.p_max <= 0.0) spec.p_max = 1.2 * p_seen;
  if (p_seen > spec.p_max * (1.0 + 1e-12))
    throw SpecError("jump density exceeds p_max at a sampled point");

  for (const Vec& y : states) {
    for (int r = 0; r < 4; ++r) {
      Vec theta = spec.theta_upper.cwiseProduct(
          Vec::NullaryExpr(spec.theta_upper.size(), [&] { return s.uniform(); }));
      Vec z = spec.jump_map(theta, y) + sample_perturbation(pert, spec.dim, s);
      if (!spec.contains(z)) throw SpecError("perturbed jump leaves the state set");
    }
  }
}

std::pair<double, double> small_set_interval(double lambda, double alpha) {
  if (alpha == 0.0) return {0.0, 1.0};
  const double edge = std::log(lambda / (lambda - alpha)) / alpha;
  if (alpha > 0.0) return {0.0, std::min(1.0, edge)};
  // alpha < 0: lam / (lam - alpha) < 1, so T has to start late enough
  return {edge, edge + 1.0};
}

double AssumptionConstants::delta() const {
  return in.delta_pi * in.delta_p * (std::exp(-lambda * T_lo) - std::exp(-lambda * T_hi));
}

double AssumptionConstants::l() const {
  return lambda * in.L * (in.L_p + in.L_w * in.L_pi + 1.0) / (lambda - in.alpha);
}

namespace {

struct SupEstimate {
  double value = 0.0;
  double se = 0.0;
};

// max over grid and regimes of E_t E_theta |w_theta(S_i(t,y*)) - y*| with
// theta ~ p(S_i(t,y), .), t ~ Exp(lam)
SupEstimate drift_sup(const ModelSpec& spec, Stream& s, double radius, int points, int draws) {
  auto grid = sample_states(spec, s, radius, std::max(points - 1, 0));
  grid.insert(grid.begin(), spec.reference_point);
  const Vec& ys = spec.reference_point;
  SupEstimate best{-1.0, 0.0};
  for (const Vec& y : grid) {
    for (int i = 0; i < spec.regimes; ++i) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < draws; ++n) {
        const double t = sample_holding_time(s, spec.jump_rate);
        Vec theta = sample_theta(spec, s, flow(spec, i, t, y));
        const double v = (spec.jump_map(theta, flow(spec, i, t, ys)) - ys).norm();
        sum += v;
        sq += v * v;
      }
      const double mean = sum / draws;
      const double var = std::max(0.0, sq / draws - mean * mean);
      if (mean > best.value) best = {mean, std::sqrt(var / draws)};
    }
  }
  return best;
}

}  // namespace

AssumptionConstants derive_constants(const ModelSpec& spec, const AssumptionInputs& in,
                                     const DeriveOptions& opt) {
  const double lam = spec.jump_rate;
  if (!(in.alpha < lam)) throw PreconditionError("flow exponent alpha must be smaller than the jump rate");
  if (!(in.L > 0.0) || !(in.L_w > 0.0)) throw PreconditionError("L and L_w must be positive");
  if (in.lcal.l0 < 0.0 || in.lcal.l1 < 0.0) throw PreconditionError("Lcal must be nonnegative");
  if (in.delta_p <= 0.0 || in.delta_pi <= 0.0 || in.L_p < 0.0 || in.L_pi < 0.0)
    throw PreconditionError("minorization constants must be positive, Lipschitz constants nonnegative");

  AssumptionConstants k;
  k.in = in;
  k.lambda = lam;
  k.a = lam * in.L * in.L_w / (lam - in.alpha);
  if (k.a >= 1.0)
    throw ContractivityViolation("a = " + fmt(k.a) + " >= 1: L*L_w + alpha/lambda = " +
                                 fmt(in.L * in.L_w + in.alpha / lam) + " is not below 1");
  std::tie(k.T_lo, k.T_hi) = small_set_interval(lam, in.alpha);
  k.grid_points = opt.grid_points;
  k.mc_draws = opt.mc_draws;

  Stream s(opt.seed);
  const double eps = spec.perturbation.eps;
  const double ystar = spec.reference_point.norm();
  SupEstimate first = drift_sup(spec, s, 1.0, opt.grid_points, opt.mc_draws);
  const double M1 = 4.0 * (first.value + eps) / (1.0 - k.a) + ystar;
  SupEstimate main = drift_sup(spec, s, M1, opt.grid_points, opt.mc_draws);
  SupEstimate outer = drift_sup(spec, s, 2.0 * M1, std::max(opt.grid_points / 4, 1), opt.mc_draws);
  if (!std::isfinite(main.value) ||
      outer.value > 1.5 * main.value + 3.0 * (main.se + outer.se) + 1e-12)
    throw AssumptionA1Suspect("drift integral grows with the grid radius: " + fmt(main.value) +
                              " on radius " + fmt(M1) + ", " + fmt(outer.value) + " on radius " +
                              fmt(2.0 * M1));
  // lam int e^{-lam t} g dt = E g(t) for t ~ Exp(lam)
  k.b = main.value + eps;
  k.b_se = main.se;
  k.R = 4.0 * k.b / (1.0 - k.a);
  k.M = k.R + ystar;
  k.c = in.lcal(k.M) * (lam - in.alpha) / (lam * in.L) *
            std::max(std::exp(k.T_hi) / lam, lam / (lam - in.alpha)) +
        2.0 * (lam - in.alpha) / in.L;
  return k;
}

std::string constants_report(const AssumptionConstants& k) {
  std::ostringstream os;
  auto kv = [&](const char* key, double v) { os << key << " = " << fmt(v) << "\n"; };
  kv("lambda", k.lambda);
  kv("L", k.in.L);
  kv("alpha", k.in.alpha);
  kv("lcal0", k.in.lcal.l0);
  kv("lcal1", k.in.lcal.l1);
  kv("L_w", k.in.L_w);
  kv("L_p", k.in.L_p);
  kv("L_pi", k.in.L_pi);
  kv("delta_p", k.in.delta_p);
  kv("delta_pi", k.in.delta_pi);
  kv("contraction_margin", k.in.L * k.in.L_w + k.in.alpha / k.lambda);
  kv("a", k.a);
  kv("q", k.q());
  kv("b", k.b);
  kv("b_se", k.b_se);
  kv("R", k.R);
  kv("M", k.M);
  kv("c", k.c);
  kv("T_lo", k.T_lo);
  kv("T_hi", k.T_hi);
  kv("delta", k.delta());
  kv("l", k.l());
  os << "b_grid_points = " << k.grid_points << "\n";
  os << "b_mc_draws = " << k.mc_draws << "\n";
  os << "c_reading = (Lcal(M)(lambda-alpha)/(lambda L)) * max(e^{sup T}/lambda, "
        "lambda/(lambda-alpha)) + 2(lambda-alpha)/L\n";
  return os.str();
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

bool AssumptionReport::all_pass() const {
  for (const auto& c : conditions)
    if (c.verdict != Verdict::pass) return false;
  return true;
}

namespace {

Verdict upper(double worst, double bound) {
  return worst <= bound * (1.0 + 1e-9) + 1e-12 ? Verdict::pass : Verdict::fail;
}

Verdict lower(double worst, double bound, double slack) {
  if (worst >= bound * (1.0 - 1e-9) - 1e-12) return Verdict::pass;
  return worst >= bound - slack ? Verdict::inconclusive : Verdict::fail;
}

}  // namespace

AssumptionReport verify_assumptions(const ModelSpec& spec, const AssumptionConstants& k,
                                    const AssumptionBudget& budget) {
  if (budget.pairs < 100) throw InputError("verify_assumptions: at least 100 state pairs");
  Stream s(budget.seed);
  const auto& in = k.in;
  const double lam = spec.jump_rate;
  const int n = budget.pairs;

  // pairs: half spread over the ball of radius M, half close neighbours
  std::vector<std::pair<Vec, Vec>> pairs;
  auto ys1 = sample_states(spec, s, k.M, n);
  auto ys2 = sample_states(spec, s, k.M, n);
  for (int p = 0; p < n; ++p) {
    Vec y2 = ys2[p];
    if (p % 2) {
      for (int tries = 0; tries < 100; ++tries) {
        Vec cand = ys1[p] + 0.1 * s.uniform() * s.unit_ball(spec.dim);
        if (spec.contains(cand)) {
          y2 = cand;
          break;
        }
      }
    }
    pairs.emplace_back(ys1[p], y2);
  }
  const TensorGrid grid = box_grid(spec.theta_upper, std::min(budget.theta_nodes,
                                                              theta_nodes_for(spec.theta_upper.size())));
  auto integrate = [&](auto&& g) {
    double acc = 0.0;
    for (Eigen::Index q = 0; q < grid.weights.size(); ++q) acc += grid.weights[q] * g(Vec(grid.points.col(q)));
    return acc;
  };

  AssumptionReport rep;

  {
    ConditionVerdict v{"drift_integral", Verdict::pass, 0.0, k.b - spec.perturbation.eps, 0, ""};
    double se_at_worst = 0.0;
    for (int p = 0; p < std::min(n, 50); ++p) {
      const Vec& y = pairs[p].first;
      for (int i = 0; i < spec.regimes; ++i) {
        double sum = 0.0, sq = 0.0;
        for (int m = 0; m < budget.mc_draws; ++m) {
          const double t = sample_holding_time(s, lam);
          Vec theta = sample_theta(spec, s, flow(spec, i, t, y));
          const double val =
              (spec.jump_map(theta, flow(spec, i, t, spec.reference_point)) - spec.reference_point).norm();
          sum += val;
          sq += val * val;
        }
        const double mean = sum / budget.mc_draws;
        const double se =
            std::sqrt(std::max(0.0, sq / budget.mc_draws - mean * mean) / budget.mc_draws);
        if (mean > v.worst) {
          v.worst = mean;
          se_at_worst = se;
        }
        v.samples += budget.mc_draws;
      }
    }
    if (!std::isfinite(v.worst)) v.verdict = Verdict::fail;
    else if (v.worst > v.bound + 3.0 * (se_at_worst + k.b_se)) v.verdict = Verdict::inconclusive;
    v.note = "max over sampled y of the drift integral; finite, compared with b - eps";
    rep.conditions.push_back(v);
  }

  {
    ConditionVerdict v{"flow_lipschitz", Verdict::pass, 0.0, in.L, 0, ""};
    for (const auto& [y1, y2] : pairs) {
      const double dy = (y1 - y2).norm();
      for (int r = 0; r < 4; ++r) {
        const double t = r == 0 ? 0.1 * s.uniform() : sample_holding_time(s, lam);
        const int i = static_cast<int>(s.index(static_cast<std::size_t>(spec.regimes)));
        const int j = static_cast<int>(s.index(static_cast<std::size_t>(spec.regimes)));
        const double lhs = (flow(spec, i, t, y1) - flow(spec, j, t, y2)).norm();
        const double sw = i != j ? t * in.lcal(y2.norm()) : 0.0;
        ++v.samples;
        if (dy > 1e-12) {
          v.worst = std::max(v.worst, (lhs - sw) / (std::exp(in.alpha * t) * dy));
        } else if (lhs > sw * (1.0 + 1e-9) + 1e-12) {
          v.worst = std::numeric_limits<double>::infinity();
        }
      }
    }
    v.verdict = upper(v.worst, v.bound);
    v.note = "max (|S_i(t,y1)-S_j(t,y2)| - t Lcal(|y2|)[i!=j]) / (e^{alpha t}|y1-y2|)";
    rep.conditions.push_back(v);
  }

  {
    ConditionVerdict v{"jump_lipschitz", Verdict::pass, 0.0, in.L_w, 0, ""};
    for (const auto& [y1, y2] : pairs) {
      const double dy = (y1 - y2).norm();
      if (dy < 1e-12) continue;
      const double num = integrate([&](const Vec& th) {
        return (spec.jump_map(th, y1) - spec.jump_map(th, y2)).norm() * spec.jump_density(y1, th);
      });
      v.worst = std::max(v.worst, num / dy);
      ++v.samples;
    }
    v.verdict = upper(v.worst, v.bound);
    v.note = "quadrature of int |w(y1)-w(y2)| p(y1,.) / |y1-y2|";
    rep.conditions.push_back(v);
  }

  {
    ConditionVerdict sw{"switching_lipschitz", Verdict::pass, 0.0, in.L_pi, 0, ""};
    ConditionVerdict de{"density_lipschitz", Verdict::pass, 0.0, in.L_p, 0, ""};
    for (const auto& [y1, y2] : pairs) {
      const double dy = (y1 - y2).norm();
      if (dy < 1e-12) continue;
      for (int i = 0; i < spec.regimes; ++i) {
        double acc = 0.0;
        for (int j = 0; j < spec.regimes; ++j) acc += std::abs(spec.pi(i, j, y1) - spec.pi(i, j, y2));
        sw.worst = std::max(sw.worst, acc / dy);
        ++sw.samples;
      }
      const double l1 = integrate(
          [&](const Vec& th) { return std::abs(spec.jump_density(y1, th) - spec.jump_density(y2, th)); });
      de.worst = std::max(de.worst, l1 / dy);
      ++de.samples;
    }
    sw.verdict = upper(sw.worst, sw.bound);
    de.verdict = upper(de.worst, de.bound);
    sw.note = "max_i sum_j |pi_ij(y1)-pi_ij(y2)| / |y1-y2|";
    de.note = "quadrature of int |p(y1,.)-p(y2,.)| / |y1-y2|";
    rep.conditions.push_back(sw);
    rep.conditions.push_back(de);
  }

  {
    ConditionVerdict sw{"switching_overlap", Verdict::pass, std::numeric_limits<double>::infinity(),
                        in.delta_pi, 0, ""};
    ConditionVerdict de{"density_overlap", Verdict::pass, std::numeric_limits<double>::infinity(),
                        in.delta_p, 0, ""};
    for (const auto& [y1, y2] : pairs) {
      for (int i1 = 0; i1 < spec.regimes; ++i1)
        for (int i2 = 0; i2 < spec.regimes; ++i2) {
          double acc = 0.0;
          for (int j = 0; j < spec.regimes; ++j) acc += std::min(spec.pi(i1, j, y1), spec.pi(i2, j, y2));
          sw.worst = std::min(sw.worst, acc);
          ++sw.samples;
        }
      const double dy = (y1 - y2).norm();
      const double overlap = integrate([&](const Vec& th) {
        const double dw = (spec.jump_map(th, y1) - spec.jump_map(th, y2)).norm();
        if (dw > in.L_w * dy * (1.0 + 1e-12) + 1e-12) return 0.0;
        return std::min(spec.jump_density(y1, th), spec.jump_density(y2, th));
      });
      de.worst = std::min(de.worst, overlap);
      ++de.samples;
    }
    sw.verdict = lower(sw.worst, sw.bound, 1e-9);
    de.verdict = lower(de.worst, de.bound, 1e-3);
    sw.note = "min sum_j min(pi_{i1 j}(y1), pi_{i2 j}(y2))";
    de.note = "quadrature of int over Theta(y1,y2) of min(p(y1,.), p(y2,.))";
    rep.conditions.push_back(sw);
    rep.conditions.push_back(de);
  }
  return rep;
}

std::string assumption_report_text(const AssumptionReport& r) {
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

}  // namespace pdmp
