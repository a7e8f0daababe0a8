#include "pdmp/gene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pdmp/quadrature.hpp"

namespace pdmp {

const char* to_string(BurstKind k) {
  return k == BurstKind::constant ? "constant" : "truncated_exponential";
}

namespace {

double beta_at(const BurstParams& b, const Vec& y) {
  const double r = y.norm();
  return b.beta_min + (b.beta_max - b.beta_min) * r / (1.0 + r);
}

// log of beta / (1 - e^{-beta Delta}), the density at theta = 0
double log_peak(double beta, double upper) { return std::log(beta) - std::log(-std::expm1(-beta * upper)); }

double trunc_exp(double beta, const Vec& upper, const Vec& th) {
  double lp = 0.0;
  for (Eigen::Index k = 0; k < th.size(); ++k) {
    if (th[k] < 0.0 || th[k] > upper[k]) return 0.0;
    lp += log_peak(beta, upper[k]) - beta * th[k];
  }
  return std::exp(lp);
}

// int_0^Delta |d/dbeta q_beta| for the 1-d truncated exponential. The
// derivative changes sign once, at the mean, so each side is smooth.
double score_l1(double beta, double upper) {
  const double tail = upper * std::exp(-beta * upper) / (-std::expm1(-beta * upper));
  const double mean = 1.0 / beta - tail;
  auto dq = [&](double th) {
    const double q = std::exp(log_peak(beta, upper) - beta * th);
    return q * (1.0 / beta - th - tail);
  };
  double acc = 0.0;
  for (auto [lo, hi] : {std::pair{0.0, mean}, std::pair{mean, upper}}) {
    const auto r = gauss_legendre<double>(32, lo, hi);
    for (Eigen::Index k = 0; k < r.nodes.size(); ++k) acc += r.weights[k] * std::abs(dq(r.nodes[k]));
  }
  return acc;
}

// Composite Gauss-Legendre on the box; min(p1, p2) has a kink, so many
// small panels beat one high-order rule.
double overlap(const std::function<double(const Vec&)>& p1, const std::function<double(const Vec&)>& p2,
               const Vec& upper) {
  const int d = static_cast<int>(upper.size());
  const int panels = d == 1 ? 512 : d == 2 ? 128 : 24;
  const auto base = gauss_legendre<double>(4, 0.0, 1.0);
  std::vector<double> nodes1, w1;
  for (int p = 0; p < panels; ++p)
    for (Eigen::Index k = 0; k < base.nodes.size(); ++k) {
      nodes1.push_back((p + base.nodes[k]) / panels);
      w1.push_back(base.weights[k] / panels);
    }
  const std::size_t per = nodes1.size();
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= per;
  double acc = 0.0;
  Vec th(d);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      const std::size_t j = rem % per;
      rem /= per;
      th[k] = nodes1[j] * upper[k];
      w *= w1[j] * upper[k];
    }
    acc += w * std::min(p1(th), p2(th));
  }
  return acc;
}

}  // namespace

BurstDensity default_burst_density(const BurstParams& params, const Vec& upper) {
  if (upper.size() < 1 || !(upper.minCoeff() > 0.0))
    throw InputError("burst box: every upper edge must be positive");
  const double vol = upper.prod();
  BurstDensity out;
  out.name = to_string(params.kind);
  if (params.kind == BurstKind::constant) {
    out.p = [vol, upper](const Vec&, const Vec& th) {
      for (Eigen::Index k = 0; k < th.size(); ++k)
        if (th[k] < 0.0 || th[k] > upper[k]) return 0.0;
      return 1.0 / vol;
    };
    out.p_max = 1.0 / vol;
    out.L_p = 0.0;
    out.delta_p = 1.0;
    return out;
  }

  if (!(params.beta_min > 0.0) || params.beta_max < params.beta_min)
    throw InputError("burst rates need 0 < burst.beta_min <= burst.beta_max");
  const BurstParams b = params;
  out.p = [b, upper](const Vec& y, const Vec& th) { return trunc_exp(beta_at(b, y), upper, th); };
  out.p_max = 1.0;
  for (Eigen::Index k = 0; k < upper.size(); ++k) out.p_max *= std::exp(log_peak(b.beta_max, upper[k]));

  const TensorGrid grid = box_grid(upper, 24);
  for (double beta : {b.beta_min, 0.5 * (b.beta_min + b.beta_max), b.beta_max}) {
    double mass = 0.0;
    for (Eigen::Index q = 0; q < grid.points.cols(); ++q)
      mass += grid.weights[q] * trunc_exp(beta, upper, grid.points.col(q));
    if (std::abs(mass - 1.0) > 1e-6)
      throw InputError("burst density integrates to " + fmt(mass) + " at rate " + fmt(beta));
  }

  // beta(.) has Lipschitz constant beta_max - beta_min since r/(1+r) is
  // 1-Lipschitz; chain it with the L1 norm of the score.
  double sup = 0.0;
  if (b.beta_max > b.beta_min) {
    for (int g = 0; g <= 200; ++g) {
      const double beta = b.beta_min + (b.beta_max - b.beta_min) * g / 200.0;
      double acc = 0.0;
      for (Eigen::Index k = 0; k < upper.size(); ++k) acc += score_l1(beta, upper[k]);
      sup = std::max(sup, acc);
    }
  }
  out.L_p = (b.beta_max - b.beta_min) * sup;
  out.delta_p = b.beta_max == b.beta_min
                    ? 1.0
                    : overlap([&](const Vec& th) { return trunc_exp(b.beta_min, upper, th); },
                              [&](const Vec& th) { return trunc_exp(b.beta_max, upper, th); }, upper);
  return out;
}

double verify_dissipativity(const std::function<Vec(const Vec&)>& field, int dim, int pairs,
                            double radius, std::uint64_t seed) {
  if (pairs < 1000) throw PreconditionError("verify_dissipativity: needs at least 10^3 pairs");
  if (!(radius > 0.0)) throw InputError("verify_dissipativity: radius must be positive");
  Stream s(seed);
  auto point = [&] {
    Vec y(dim);
    for (int k = 0; k < dim; ++k) y[k] = radius * s.uniform();
    return y;
  };
  double best = std::numeric_limits<double>::infinity();
  for (int p = 0; p < pairs; ++p) {
    const Vec y1 = point();
    Vec y2;
    if (p % 4 == 0) {
      y2 = y1;
      const int k = (p / 4) % dim;
      y2[k] = radius * s.uniform();
    } else {
      y2 = point();
    }
    const Vec dy = y1 - y2;
    const double n2 = dy.squaredNorm();
    if (n2 == 0.0) continue;
    best = std::min(best, dy.dot(field(y1) - field(y2)) / n2);
  }
  if (!(best > 0.0))
    throw NotDissipative("degradation field is not dissipative: estimated constant " + fmt(best));
  return best;
}

OperonBundle build_operon_spec(const OperonModel& m, std::uint64_t seed) {
  const int d = m.dim();
  if (d < 1) throw SpecError("gene model needs at least one protein (burst.upper)");
  if (!(m.jump_rate > 0.0)) throw SpecError("model.jump_rate must be positive");
  if (m.perturbation.eps < 0.0) throw SpecError("perturbation.eps must be nonnegative");

  OperonBundle b;
  ModelSpec& spec = b.spec;
  spec.name = "gene";
  spec.dim = d;
  spec.regimes = 1;
  if (m.degradation) {
    if (!(m.alpha_bar > 0.0)) throw SpecError("gene.alpha_bar certificate must be positive");
    const double est = verify_dissipativity(m.degradation, d, 2000, 5.0, seed);
    if (est < m.alpha_bar * (1.0 - 1e-9))
      throw SpecError("gene.alpha_bar = " + fmt(m.alpha_bar) +
                      " exceeds the sampled dissipativity constant " + fmt(est));
    b.alpha_bar = m.alpha_bar;
    auto D = m.degradation;
    spec.flows.push_back(Flow{nullptr, [D](const Vec& y) -> Vec { return -D(y); }});
  } else {
    if (m.rates.size() != d) throw SpecError("gene.rates must have one entry per protein");
    if (!(m.rates.minCoeff() > 0.0)) throw SpecError("degradation field is not dissipative: every rate must be positive");
    b.alpha_bar = m.rates.minCoeff();
    const Vec a = m.rates;
    spec.flows.push_back(Flow{[a](double t, const Vec& y) -> Vec {
                                return ((-t * a).array().exp() * y.array()).matrix();
                              },
                              [a](const Vec& y) -> Vec { return -(a.array() * y.array()).matrix(); }});
  }
  b.density = default_burst_density(m.burst, m.burst_upper);
  spec.theta_upper = m.burst_upper;
  spec.jump_map = [](const Vec& th, const Vec& y) -> Vec { return y + th; };
  spec.jump_density = b.density.p;
  spec.p_max = b.density.p_max;
  spec.jump_rate = m.jump_rate;
  spec.perturbation = m.perturbation;
  if (spec.perturbation.eps_star < spec.perturbation.eps) spec.perturbation.eps_star = spec.perturbation.eps;
  if (spec.perturbation.eps == 0.0) spec.perturbation.kind = PerturbationKind::point;
  spec.reference_point = Vec::Zero(d);
  spec.state_set = [](const Vec& y) { return y.minCoeff() >= 0.0; };

  std::ostringstream fp;
  fp << "gene d=" << d << " rates=";
  for (Eigen::Index k = 0; k < m.rates.size(); ++k) fp << (k ? "," : "") << fmt(m.rates[k]);
  fp << " alpha_bar=" << fmt(b.alpha_bar) << " upper=";
  for (Eigen::Index k = 0; k < d; ++k) fp << (k ? "," : "") << fmt(m.burst_upper[k]);
  fp << " burst=" << to_string(m.burst.kind) << "," << fmt(m.burst.beta_min) << ","
     << fmt(m.burst.beta_max) << " lambda=" << fmt(m.jump_rate)
     << " perturbation=" << to_string(spec.perturbation.kind) << "," << fmt(spec.perturbation.eps);
  spec.fingerprint = fp.str();

  validate_spec(spec, seed);

  AssumptionInputs& in = b.inputs;
  in.L = 1.0;
  in.alpha = -b.alpha_bar;
  in.lcal = {0.0, 0.0};
  in.L_w = 1.0;
  in.L_p = b.density.L_p;
  in.L_pi = 0.0;
  in.delta_p = b.density.delta_p;
  in.delta_pi = 1.0;
  return b;
}

ContractionReport flow_contraction_check(const ModelSpec& spec, double alpha_bar, int pairs,
                                         const std::vector<double>& t_grid, std::uint64_t seed,
                                         double radius) {
  Stream s(seed);
  ContractionReport rep;
  std::vector<std::pair<Vec, Vec>> ps;
  for (int p = 0; p < pairs; ++p) {
    Vec y1(spec.dim), y2(spec.dim);
    for (int k = 0; k < spec.dim; ++k) {
      y1[k] = radius * s.uniform();
      y2[k] = radius * s.uniform();
    }
    ps.push_back({y1, y2});
  }
  for (double t : t_grid) {
    ContractionRow row{t, 0.0};
    for (const auto& [y1, y2] : ps) {
      const double dy = (y1 - y2).norm();
      if (dy == 0.0) continue;
      const double r = (flow(spec, 0, t, y1) - flow(spec, 0, t, y2)).norm() * std::exp(alpha_bar * t) / dy;
      row.max_ratio = std::max(row.max_ratio, r);
    }
    rep.max_ratio = std::max(rep.max_ratio, row.max_ratio);
    rep.rows.push_back(row);
  }
  rep.pass = rep.max_ratio <= 1.0 + 1e-6;
  return rep;
}

std::vector<ExperimentResult> operon_demo(const OperonBundle& b, double c, std::uint64_t seed,
                                          const DemoBudget& budget) {
  const ModelSpec& spec = b.spec;
  const int d = spec.dim;
  std::vector<ExperimentResult> out;
  const HybridState origin{Vec::Zero(d), 0};

  Stream s_inv(derive_seed(seed, 1));
  const auto times = equally_spaced_times(budget.burn_in, budget.horizon, budget.samples);
  const EmpiricalMeasure nu = estimate_invariant_pdmp(spec, s_inv, origin, budget.horizon, times, c);
  ExperimentResult inv;
  inv.name = "operon_invariant";
  Vec mean = Vec::Zero(d);
  for (const auto& x : nu.points) mean += x.y;
  mean /= static_cast<double>(nu.size());
  for (int k = 0; k < d; ++k) inv.add_scalar("mean_" + std::to_string(k + 1), mean[k]);
  const auto f = min_one_norm();
  const double ref = integrate(nu, f.f);
  inv.add_scalar("f_mean", ref);
  for (int k = 0; k < d; ++k) {
    double hi = 0.0;
    for (const auto& x : nu.points) hi = std::max(hi, x.y[k]);
    hi = hi > 0.0 ? hi * (1.0 + 1e-9) : 1.0;
    std::vector<double> mass(budget.bins, 0.0);
    for (const auto& x : nu.points) {
      const int bin = std::min(budget.bins - 1, static_cast<int>(x.y[k] / hi * budget.bins));
      mass[bin] += 1.0 / static_cast<double>(nu.size());
    }
    SeriesOutcome h{"histogram_" + std::to_string(k + 1), {"bin_lo", "bin_hi", "mass"}, {}};
    for (int j = 0; j < budget.bins; ++j)
      h.rows.push_back({hi * j / budget.bins, hi * (j + 1) / budget.bins, mass[j]});
    inv.series.push_back(std::move(h));
  }
  out.push_back(std::move(inv));

  SllnOptions so;
  so.replicas = budget.slln_replicas;
  so.tol = 0.03;
  std::vector<double> cps;
  for (double t = budget.slln_horizon; t >= budget.slln_horizon / 100.0 * 0.999; t /= std::sqrt(10.0))
    cps.insert(cps.begin(), t);
  out.push_back(slln_pdmp(spec, b.inputs, derive_seed(seed, 2), f, origin, cps, ref, so));

  ConvergenceOptions co;
  co.replicas = budget.convergence_replicas;
  co.checkpoints = budget.checkpoints;
  const auto a0 = EmpiricalMeasure::uniform({origin}, c);
  const auto b0 = EmpiricalMeasure::uniform({{Vec::Constant(d, budget.start_level), 0}}, c);
  out.push_back(convergence_experiment(spec, derive_seed(seed, 3), c, a0, b0, co));
  return out;
}

}  // namespace pdmp
