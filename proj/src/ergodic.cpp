#include "pdmp/ergodic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "pdmp/parallel.hpp"
#include "pdmp/quadrature.hpp"

namespace pdmp {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

// Least-squares slope of log y on log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += std::log(x[k]);
    my += std::log(std::max(y[k], 1e-300));
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = std::log(x[k]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(std::max(y[k], 1e-300)) - my);
  }
  return sxx > 0 ? sxy / sxx : 0.0;
}

nlohmann::ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

bool ExperimentResult::all_pass() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.pass; });
}

double ExperimentResult::scalar(const std::string& key) const {
  for (const auto& s : scalars)
    if (s.name == key) return s.value;
  throw InputError("experiment '" + name + "' has no scalar '" + key + "'");
}

const VerdictOutcome& ExperimentResult::verdict(const std::string& key) const {
  for (const auto& v : verdicts)
    if (v.name == key) return v;
  throw InputError("experiment '" + name + "' has no verdict '" + key + "'");
}

void ExperimentResult::add_scalar(std::string key, double value, double se) {
  scalars.push_back({std::move(key), value, se});
}

void ExperimentResult::add_verdict(std::string key, bool pass, double value, double bound,
                                   std::string note) {
  verdicts.push_back({std::move(key), pass, value, bound, std::move(note)});
}

std::string ExperimentResult::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["digest"] = digest;
  j["all_pass"] = all_pass();
  auto& sc = j["scalars"] = nlohmann::ordered_json::array();
  for (const auto& s : scalars) sc.push_back({{"name", s.name}, {"value", number(s.value)}, {"se", number(s.se)}});
  auto& vs = j["verdicts"] = nlohmann::ordered_json::array();
  for (const auto& v : verdicts)
    vs.push_back({{"name", v.name},
                  {"pass", v.pass},
                  {"value", number(v.value)},
                  {"bound", number(v.bound)},
                  {"note", v.note}});
  auto& se = j["series"] = nlohmann::ordered_json::array();
  for (const auto& s : series) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : s.rows) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (double v : r) row.push_back(number(v));
      rows.push_back(row);
    }
    se.push_back({{"name", s.name}, {"columns", s.columns}, {"rows", rows}});
  }
  return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> ExperimentResult::write(const std::filesystem::path& dir,
                                                           const std::string& stem) const {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  const auto jp = dir / (stem + ".json");
  std::ofstream(jp, std::ios::binary) << to_json();
  out.push_back(jp);
  auto field = [&](const char* k) {
    auto it = digest.find(k);
    return it == digest.end() ? std::string() : it->second;
  };
  for (const auto& s : series) {
    const auto cp = dir / (stem + "_" + s.name + ".csv");
    std::ofstream os(cp, std::ios::binary);
    os << "# spec_hash=" << field("spec_hash") << " seed=" << field("seed") << "\n";
    for (std::size_t k = 0; k < s.columns.size(); ++k) os << (k ? "," : "") << s.columns[k];
    os << "\n";
    for (const auto& r : s.rows) {
      for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << fmt(r[k]);
      os << "\n";
    }
    out.push_back(cp);
  }
  return out;
}

EmpiricalMeasure estimate_invariant_chain(const ModelSpec& spec, Stream& s, const HybridState& x0,
                                          std::size_t burn_in, std::size_t n, std::size_t thin,
                                          double c) {
  if (n < 1) throw PreconditionError("estimate_invariant_chain: n must be at least 1");
  if (thin < 1) throw PreconditionError("estimate_invariant_chain: thin must be at least 1");
  HybridState x = x0;
  for (std::size_t k = 0; k < burn_in; ++k) x = chain_step(spec, s, x);
  std::vector<HybridState> pts;
  pts.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t r = 0; r < thin; ++r) x = chain_step(spec, s, x);
    pts.push_back(x);
  }
  return EmpiricalMeasure::uniform(std::move(pts), c);
}

EmpiricalMeasure estimate_invariant_pdmp(const ModelSpec& spec, Stream& s, const HybridState& x0,
                                         double horizon, const std::vector<double>& sample_times,
                                         double c) {
  if (sample_times.empty()) throw PreconditionError("estimate_invariant_pdmp: no sample times");
  for (std::size_t k = 0; k < sample_times.size(); ++k) {
    const double t = sample_times[k];
    if (!(t > 0.0 && t <= horizon) || (k && t < sample_times[k - 1]))
      throw PreconditionError("estimate_invariant_pdmp: sample times must increase within (0, horizon]");
  }
  // Streams the path instead of storing it; the draws match simulate_pdmp.
  std::vector<HybridState> pts;
  pts.reserve(sample_times.size());
  HybridState x = x0;
  double tau = 0.0;
  std::size_t next = 0;
  while (next < sample_times.size()) {
    StepRecord r = chain_step_record(spec, s, x);
    while (next < sample_times.size() && sample_times[next] < tau + r.dt) {
      pts.push_back({flow(spec, x.i, sample_times[next] - tau, x.y), x.i});
      ++next;
    }
    tau += r.dt;
    x = std::move(r.next);
  }
  return EmpiricalMeasure::uniform(std::move(pts), c);
}

std::vector<double> equally_spaced_times(double burn_in, double horizon, std::size_t n) {
  if (!(horizon > burn_in) || burn_in < 0 || n == 0)
    throw InputError("sample times need 0 <= burn_in < horizon and n > 0");
  std::vector<double> t(n);
  const double dt = (horizon - burn_in) / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = burn_in + dt * static_cast<double>(k + 1);
  t.back() = horizon;
  return t;
}

std::vector<double> exponential_times(Stream& s, double burn_in, double horizon, std::size_t n) {
  if (!(horizon > burn_in) || burn_in < 0 || n == 0)
    throw InputError("sample times need 0 <= burn_in < horizon and n > 0");
  // Poisson arrivals conditioned on n points in the window: normalised
  // partial sums of n + 1 exponential gaps.
  std::vector<double> gaps(n + 1);
  for (auto& g : gaps) g = s.exponential(1.0);
  const double total = std::accumulate(gaps.begin(), gaps.end(), 0.0);
  std::vector<double> t(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += gaps[k];
    t[k] = std::min(horizon, burn_in + (horizon - burn_in) * acc / total);
  }
  return t;
}

double split_noise_floor(const EmpiricalMeasure& mu, std::uint64_t seed, std::size_t cap) {
  if (mu.size() < 4) throw InputError("split_noise_floor: need at least 4 points");
  Stream s(seed);
  std::vector<std::size_t> idx(mu.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t k = idx.size() - 1; k > 0; --k) std::swap(idx[k], idx[s.index(k + 1)]);
  const std::size_t half = std::min(idx.size() / 2, cap / 2);
  std::vector<HybridState> a, b;
  for (std::size_t k = 0; k < half; ++k) {
    a.push_back(mu.points[idx[k]]);
    b.push_back(mu.points[idx[half + k]]);
  }
  return fm_distance(EmpiricalMeasure::uniform(std::move(a), mu.c),
                     EmpiricalMeasure::uniform(std::move(b), mu.c));
}

namespace {

// FM distance between a uniform cloud and its push-forward through a
// one-step sampler with `draws` children per point. Children are generated
// lazily from per-child streams, so resampling the pushed cloud never needs
// it in memory.
SubsampleResult pushed_distance(const EmpiricalMeasure& base, const EmpiricalMeasure& other,
                                const std::function<HybridState(Stream&, const HybridState&)>& step,
                                int draws, std::uint64_t seed, const FmBudget& fm) {
  const std::size_t m = base.size() * static_cast<std::size_t>(draws);
  const std::size_t half = fm.cap / 2;
  SubsampleResult out;
  out.runs.resize(fm.runs);
  for (int r = 0; r < fm.runs; ++r) {
    Stream pick(derive_seed(seed, 2 * r));
    std::vector<std::size_t> ia(std::min(m, half)), ib;
    for (std::size_t k = 0; k < ia.size(); ++k) ia[k] = m <= half ? k : pick.index(m);
    if (other.size() <= half) {
      ib.resize(other.size());
      std::iota(ib.begin(), ib.end(), 0);
    } else {
      ib.resize(half);
      for (auto& v : ib) v = pick.index(other.size());
    }
    std::vector<HybridState> pa(ia.size()), pb;
    parallel_for(ia.size(), [&](std::size_t k) {
      Stream child(derive_seed(seed ^ 0x9e3779b97f4a7c15ULL, ia[k]));
      pa[k] = step(child, base.points[ia[k] / draws]);
    });
    for (auto v : ib) pb.push_back(other.points[v]);
    out.runs[r] = fm_distance(EmpiricalMeasure::uniform(std::move(pa), base.c),
                              EmpiricalMeasure::uniform(std::move(pb), other.c));
  }
  out.mean = std::accumulate(out.runs.begin(), out.runs.end(), 0.0) / fm.runs;
  out.min = *std::min_element(out.runs.begin(), out.runs.end());
  out.max = *std::max_element(out.runs.begin(), out.runs.end());
  return out;
}

}  // namespace

ExperimentResult check_relation_G(const ModelSpec& spec, Stream& s, const EmpiricalMeasure& mu_star,
                                  const EmpiricalMeasure& nu_star, int per_point_draws, double tol,
                                  const FmBudget& fm) {
  if (mu_star.size() == 0 || nu_star.size() == 0)
    throw PreconditionError("check_relation_G: both invariant estimates must be nonempty");
  if (per_point_draws < 1) throw InputError("check_relation_G: per_point_draws must be positive");
  ExperimentResult res;
  res.name = "relation_gw";
  const std::uint64_t sg = s.bits(), sw = s.bits(), sn = s.bits();
  auto G = [&](Stream& st, const HybridState& x) { return sample_G(spec, st, x); };
  auto W = [&](Stream& st, const HybridState& x) { return sample_W(spec, st, x); };
  const auto dg = pushed_distance(mu_star, nu_star, G, per_point_draws, sg, fm);
  const auto dw = pushed_distance(nu_star, mu_star, W, per_point_draws, sw, fm);
  const double floor = split_noise_floor(nu_star, sn, fm.cap);
  res.add_scalar("fm_muG_nu", dg.mean, dg.max - dg.min);
  res.add_scalar("fm_nuW_mu", dw.mean, dw.max - dw.min);
  res.add_scalar("noise_floor", floor);
  res.add_verdict("muG_matches_nu", dg.mean <= tol, dg.mean, tol, "d_FM(mu* G, nu*)");
  res.add_verdict("nuW_matches_mu", dw.mean <= tol, dw.mean, tol, "d_FM(nu* W, mu*)");
  return res;
}

ExperimentResult check_P_equals_GW(const ModelSpec& spec, Stream& s, const HybridState& x,
                                   std::size_t n, double c, double tol) {
  if (n < 1000) throw PreconditionError("check_P_equals_GW: n must be at least 1000");
  ExperimentResult res;
  res.name = "p_equals_gw";
  const Stream sp(s.bits()), sq(s.bits());
  std::vector<HybridState> a(n), b(n);
  parallel_for(n, [&](std::size_t k) {
    Stream st = sp.split(k);
    a[k] = chain_step(spec, st, x);
    Stream sg = sq.split(k);
    b[k] = sample_W(spec, sg, sample_G(spec, sg, x));
  });
  std::vector<double> fa(spec.regimes, 0.0), fb(spec.regimes, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    fa[a[k].i] += 1.0 / n;
    fb[b[k].i] += 1.0 / n;
  }
  const double d = fm_distance(EmpiricalMeasure::uniform(std::move(a), c),
                               EmpiricalMeasure::uniform(std::move(b), c));
  res.add_scalar("fm_distance", d);
  res.add_verdict("one_step_laws_match", d <= tol, d, tol, "d_FM(P(x,.), GW(x,.)) two-sample");
  bool regimes_ok = true;
  double worst = 0.0;
  for (int j = 0; j < spec.regimes; ++j) {
    const double p = 0.5 * (fa[j] + fb[j]);
    const double band = 3.0 * std::sqrt(std::max(p * (1.0 - p), 1e-300) * 2.0 / n);
    const double z = std::abs(fa[j] - fb[j]);
    worst = std::max(worst, band > 0 ? z / band : 0.0);
    if (z > band && z > 0) regimes_ok = false;
  }
  res.add_verdict("regime_frequencies_match", regimes_ok, worst, 1.0, "largest |diff| / 3 sigma");
  return res;
}

Observable min_one_norm() {
  return {"min_one_norm", [](const Vec& y, int) { return std::min(1.0, y.norm()); }, 1.0, 1.0};
}

Observable constant_one() {
  return {"one", [](const Vec&, int) { return 1.0; }, 1.0, 0.0};
}

namespace {

void slln_verdicts(ExperimentResult& res, const std::vector<double>& xs,
                   const std::vector<std::vector<double>>& gaps, const std::string& axis,
                   const SllnOptions& opt) {
  const std::size_t nc = xs.size();
  std::vector<double> rms(nc, 0.0), worst(nc, 0.0), mean(nc, 0.0);
  for (std::size_t k = 0; k < nc; ++k) {
    for (const auto& g : gaps) {
      rms[k] += g[k] * g[k];
      worst[k] = std::max(worst[k], std::abs(g[k]));
      mean[k] += g[k];
    }
    rms[k] = std::sqrt(rms[k] / gaps.size());
    mean[k] /= gaps.size();
  }
  SeriesOutcome s{"gaps", {axis, "rms_gap", "max_abs_gap", "mean_gap"}, {}};
  for (std::size_t k = 0; k < nc; ++k) s.rows.push_back({xs[k], rms[k], worst[k], mean[k]});
  res.series.push_back(std::move(s));
  res.add_scalar("final_max_gap", worst.back());
  res.add_scalar("final_rms_gap", rms.back());
  res.add_verdict("final_gap", worst.back() <= opt.tol, worst.back(), opt.tol,
                  "largest |average - <f, invariant estimate>| over replicas");
  if (nc >= 2) {
    const double slope = loglog_slope(xs, rms);
    res.add_scalar("loglog_slope", slope);
    res.add_verdict("gap_slope", slope >= opt.slope_lo && slope <= opt.slope_hi, slope, opt.slope_hi,
                    "log-log slope of the RMS gap, accepted in [" + fmt(opt.slope_lo) + ", " +
                        fmt(opt.slope_hi) + "]");
  }
}

}  // namespace

ExperimentResult slln_chain(const ModelSpec& spec, std::uint64_t seed, const Observable& f,
                            const HybridState& x0, const std::vector<std::size_t>& checkpoints,
                            double reference, const SllnOptions& opt) {
  if (checkpoints.empty() || !std::is_sorted(checkpoints.begin(), checkpoints.end()))
    throw InputError("slln_chain: checkpoints must be nonempty and increasing");
  if (checkpoints.back() < 1000) throw PreconditionError("slln_chain: n must be at least 1000");
  if (checkpoints.front() < 1) throw InputError("slln_chain: checkpoints start at 1");
  ExperimentResult res;
  res.name = "slln_chain";
  std::vector<std::vector<double>> avgs(opt.replicas), gaps(opt.replicas);
  parallel_for(opt.replicas, [&](std::size_t r) {
    Stream s(derive_seed(seed, r));
    HybridState x = x0;
    double sum = 0.0;
    std::size_t next = 0;
    for (std::size_t n = 1; n <= checkpoints.back(); ++n) {
      x = chain_step(spec, s, x);
      sum += f.f(x.y, x.i);
      if (n == checkpoints[next]) {
        avgs[r].push_back(sum / static_cast<double>(n));
        gaps[r].push_back(avgs[r].back() - reference);
        ++next;
      }
    }
  });
  res.add_scalar("reference", reference);
  SeriesOutcome av{"averages", {"n"}, {}};
  for (int r = 0; r < opt.replicas; ++r) av.columns.push_back("replica_" + std::to_string(r + 1));
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    std::vector<double> row{static_cast<double>(checkpoints[k])};
    for (int r = 0; r < opt.replicas; ++r) row.push_back(avgs[r][k]);
    av.rows.push_back(std::move(row));
  }
  res.series.push_back(std::move(av));
  std::vector<double> xs(checkpoints.begin(), checkpoints.end());
  slln_verdicts(res, xs, gaps, "n", opt);
  return res;
}

ExperimentResult slln_pdmp(const ModelSpec& spec, const AssumptionInputs& in, std::uint64_t seed,
                           const Observable& f, const HybridState& x0,
                           const std::vector<double>& checkpoints, double reference,
                           const SllnOptions& opt) {
  if (!in.lcal.constant())
    throw PreconditionError(
        "slln_pdmp: the continuous-time law of large numbers needs a constant Lcal "
        "(constants.lcal_slope must be 0)");
  if (!(spec.jump_rate > 0.0)) throw PreconditionError("slln_pdmp: model.jump_rate must be positive");
  if (checkpoints.empty() || !std::is_sorted(checkpoints.begin(), checkpoints.end()) ||
      !(checkpoints.front() > 0.0))
    throw InputError("slln_pdmp: checkpoints must be positive and increasing");
  ExperimentResult res;
  res.name = "slln_pdmp";
  std::vector<std::vector<double>> avgs(opt.replicas), gaps(opt.replicas);
  parallel_for(opt.replicas, [&](std::size_t r) {
    Stream s(derive_seed(seed, r));
    const PdmpPath path = simulate_pdmp(spec, s, x0, checkpoints.back());
    for (double t : checkpoints) {
      avgs[r].push_back(time_average(spec, path, f.f, t));
      gaps[r].push_back(avgs[r].back() - reference);
    }
  });
  res.add_scalar("reference", reference);
  SeriesOutcome av{"averages", {"t"}, {}};
  for (int r = 0; r < opt.replicas; ++r) av.columns.push_back("replica_" + std::to_string(r + 1));
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    std::vector<double> row{checkpoints[k]};
    for (int r = 0; r < opt.replicas; ++r) row.push_back(avgs[r][k]);
    av.rows.push_back(std::move(row));
  }
  res.series.push_back(std::move(av));
  slln_verdicts(res, checkpoints, gaps, "t", opt);
  return res;
}

double cd_conv_gap(const ModelSpec& spec, const PdmpPath& path, const StateFn& f, double t) {
  const std::size_t nt = count_jumps(path, t);
  if (nt < 1) throw PreconditionError("cd_conv_gap: the path has no jump in (0, t]");
  double g = 0.0;
  for (std::size_t k = 0; k < nt; ++k) g += apply_G_quadrature(spec, f, path.chain.states[k]);
  return time_average(spec, path, f, t) - g / static_cast<double>(nt);
}

ExperimentResult martingale_diagnostics(const ModelSpec& spec, const PdmpPath& path,
                                        const Observable& f, std::size_t n) {
  if (n < 100) throw PreconditionError("martingale_diagnostics: trajectory length must be at least 100");
  if (path.chain.steps() < n)
    throw PreconditionError("martingale_diagnostics: path has only " +
                            std::to_string(path.chain.steps()) + " segments");
  const double lam = spec.jump_rate;
  std::vector<double> inc(n);
  parallel_for(n, [&](std::size_t k) {
    const HybridState& x = path.chain.states[k];
    const double len = path.chain.jump_times[k + 1] - path.chain.jump_times[k];
    inc[k] = segment_integral(spec, x.y, x.i, len, f.f) - apply_G_quadrature(spec, f.f, x) / lam;
  });
  ExperimentResult res;
  res.name = "martingale";
  double sum = 0, sq = 0;
  SeriesOutcome ms{"martingale", {"n", "M_n", "M_n_over_n"}, {}};
  std::size_t mark = 10;
  for (std::size_t k = 0; k < n; ++k) {
    sum += inc[k];
    sq += inc[k] * inc[k];
    if (k + 1 == mark || k + 1 == n) {
      ms.rows.push_back({static_cast<double>(k + 1), sum, sum / static_cast<double>(k + 1)});
      if (k + 1 == mark) mark *= 2;
    }
  }
  const double dn = static_cast<double>(n);
  const double mean = sum / dn;
  const double m2 = sq / dn;
  const double sd = std::sqrt(std::max(0.0, m2 - mean * mean));
  const double se = sd / std::sqrt(dn);
  res.series.push_back(std::move(ms));
  res.add_scalar("increment_mean", mean, se);
  res.add_scalar("increment_second_moment", m2);
  res.add_scalar("M_n_over_n", mean);
  const double bound = 6.0 * f.sup * f.sup / (lam * lam);
  res.add_verdict("increment_mean_zero", std::abs(mean) <= 3.0 * se + 1e-15, std::abs(mean),
                  3.0 * se, "|mean increment| within 3 standard errors");
  res.add_verdict("second_moment_bound", m2 <= bound, m2, bound, "E[increment^2] <= 6 |f|^2 / lam^2");
  // M_n / n equals the mean increment; the trend check asks that it has
  // reached the CLT scale rather than a fixed bias.
  res.add_verdict("M_over_n_vanishes", std::abs(mean) <= 3.0 * sd / std::sqrt(dn) + 1e-15,
                  std::abs(mean), 3.0 * sd / std::sqrt(dn), "|M_n / n| at the CLT scale");
  return res;
}

double short_time_expansion(const ModelSpec& spec, const StateFn& f, const HybridState& x, double t,
                            const ShortTimeOptions& opt, std::uint64_t h_seed) {
  const double lam = spec.jump_rate;
  const auto srule = gauss_legendre<double>(opt.s_nodes, 0.0, t);
  const TensorGrid grid = box_grid(spec.theta_upper, opt.theta_nodes);
  std::vector<Vec> hs;
  const bool degenerate =
      spec.perturbation.kind == PerturbationKind::point || spec.perturbation.eps == 0.0;
  Stream hs_stream(h_seed);
  for (int k = 0; k < (degenerate ? 1 : opt.h_draws); ++k)
    hs.push_back(sample_perturbation(spec.perturbation, spec.dim, hs_stream));

  double integral = 0.0;
  for (Eigen::Index a = 0; a < srule.nodes.size(); ++a) {
    const double s = srule.nodes[a];
    const Vec ys = flow(spec, x.i, s, x.y);
    double psi = 0.0;
    for (Eigen::Index q = 0; q < grid.points.cols(); ++q) {
      const Vec th = grid.points.col(q);
      const double p = spec.jump_density(ys, th);
      if (p == 0.0) continue;
      const Vec w = spec.jump_map(th, ys);
      double acc = 0.0;
      for (const Vec& h : hs) {
        const Vec z = w + h;
        for (int j = 0; j < spec.regimes; ++j) {
          const double pij = spec.pi(x.i, j, z);
          if (pij == 0.0) continue;
          acc += pij * f(flow(spec, j, t - s, z), j);
        }
      }
      psi += grid.weights[q] * p * acc / static_cast<double>(hs.size());
    }
    integral += srule.weights[a] * psi;
  }
  const double e = std::exp(-lam * t);
  return e * f(flow(spec, x.i, t, x.y), x.i) + lam * e * integral;
}

StratifiedEstimate stratified_pt(const ModelSpec& spec, Stream& s, const StateFn& f,
                                 const HybridState& x, double t, std::size_t draws) {
  const double lam = spec.jump_rate;
  const double mu = lam * t;
  const double p0 = std::exp(-mu);
  const double p1 = mu * p0;
  const double p2 = -std::expm1(-mu) - p1;
  auto jump = [&](const HybridState& from, double dt) {
    const Vec pre = flow(spec, from.i, dt, from.y);
    const JumpMark m = sample_jump(spec, s, pre);
    HybridState out;
    out.y = spec.jump_map(m.theta, pre) + m.h;
    out.i = sample_regime(spec, s, from.i, out.y);
    return out;
  };
  const double f0 = f(flow(spec, x.i, t, x.y), x.i);
  double m1 = 0, v1 = 0, m2 = 0, v2 = 0;
  const double dn = static_cast<double>(draws);
  for (std::size_t k = 0; k < draws; ++k) {
    const double tau = t * s.uniform();
    const HybridState z = jump(x, tau);
    const double v = f(flow(spec, z.i, t - tau, z.y), z.i);
    m1 += v;
    v1 += v * v;
  }
  // N_t given N_t >= 2 by inverse CDF, jump times as sorted uniforms
  std::vector<double> times;
  for (std::size_t k = 0; k < draws; ++k) {
    double u = s.uniform() * p2;
    int n = 2;
    double pk = p1 * mu / 2.0;
    while (u >= pk && n < 200) {
      u -= pk;
      ++n;
      pk *= mu / n;
    }
    times.resize(n);
    for (auto& tt : times) tt = t * s.uniform();
    std::sort(times.begin(), times.end());
    HybridState z = x;
    double prev = 0.0;
    for (double tt : times) {
      z = jump(z, tt - prev);
      prev = tt;
    }
    const double v = f(flow(spec, z.i, t - prev, z.y), z.i);
    m2 += v;
    v2 += v * v;
  }
  m1 /= dn;
  m2 /= dn;
  v1 = std::max(0.0, v1 / dn - m1 * m1);
  v2 = std::max(0.0, v2 / dn - m2 * m2);
  return {p0 * f0 + p1 * m1 + p2 * m2, std::sqrt(p1 * p1 * v1 / dn + p2 * p2 * v2 / dn)};
}

ExperimentResult short_time_check(const ModelSpec& spec, std::uint64_t seed, const Observable& f,
                                  const HybridState& x, const std::vector<double>& t_grid,
                                  std::size_t draws, const ShortTimeOptions& opt) {
  const double lam = spec.jump_rate;
  if (t_grid.empty() || !std::is_sorted(t_grid.begin(), t_grid.end()))
    throw InputError("short_time_check: t grid must be nonempty and increasing");
  for (double t : t_grid)
    if (!(t > 0.0 && t <= 0.2 / lam + 1e-12))
      throw PreconditionError("short_time_check: every t must lie in (0, 0.2 / jump_rate]");
  if (draws < 10000) throw PreconditionError("short_time_check: draws must be at least 10^4 per t");
  ExperimentResult res;
  res.name = "short_time";
  SeriesOutcome ser{"residuals",
                    {"t", "median_residual", "median_residual_over_t", "expansion", "estimate",
                     "estimate_se", "two_jump_mass"},
                    {}};
  SeriesOutcome two{"two_jump", {"t", "closed_form", "empirical", "band", "quadrature_residual"}, {}};
  std::vector<double> ratios;
  bool two_ok = true;
  double two_worst = 0.0;
  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    const double t = t_grid[g];
    const double closed = -std::expm1(-lam * t) - lam * t * std::exp(-lam * t);
    std::vector<double> resid(opt.seeds), ratio(opt.seeds), expn(opt.seeds), est(opt.seeds),
        se(opt.seeds);
    parallel_for(opt.seeds, [&](std::size_t k) {
      Stream s(derive_seed(seed, g * 1000 + k));
      const StratifiedEstimate e = stratified_pt(spec, s, f.f, x, t, draws);
      expn[k] = short_time_expansion(spec, f.f, x, t, opt, s.bits());
      est[k] = e.value;
      se[k] = e.se;
      resid[k] = e.value - expn[k];
      ratio[k] = resid[k] / t;
    });
    ratios.push_back(median(ratio));
    ser.rows.push_back({t, median(resid), ratios.back(), median(expn), median(est), median(se), closed});
    if (opt.unit_observable) {
      // Plain simulation: fraction of paths with at least two jumps by time t.
      Stream s(derive_seed(seed, 0xfeed0000ULL + g));
      std::size_t hits = 0;
      for (std::size_t k = 0; k < draws; ++k) hits += count_jumps(simulate_pdmp(spec, s, x, t), t) >= 2;
      const double phat = static_cast<double>(hits) / static_cast<double>(draws);
      const double band = 3.0 * std::sqrt(closed * (1.0 - closed) / static_cast<double>(draws));
      const double qres = 1.0 - short_time_expansion(spec, f.f, x, t, opt, derive_seed(seed, g));
      two.rows.push_back({t, closed, phat, band, qres});
      two_worst = std::max(two_worst, std::abs(phat - closed) / band);
      if (std::abs(phat - closed) > band) two_ok = false;
      if (std::abs(qres - closed) > 1e-9) two_ok = false;
    }
  }
  res.series.push_back(std::move(ser));
  bool increasing = true;
  for (std::size_t g = 1; g < ratios.size(); ++g) increasing = increasing && ratios[g] > ratios[g - 1];
  res.add_scalar("smallest_t_ratio", ratios.front());
  res.add_scalar("largest_t_ratio", ratios.back());
  res.add_verdict("residual_over_t_shrinks", increasing, ratios.front(), ratios.back(),
                  "median residual / t decreases as t decreases along the grid");
  if (opt.unit_observable) {
    res.series.push_back(std::move(two));
    res.add_verdict("two_jump_mass", two_ok, two_worst, 1.0,
                    "empirical P(N_t >= 2) within 3 binomial sigma of 1 - e^{-lam t}(1 + lam t)");
  }
  return res;
}

namespace {

HybridState draw_start(const EmpiricalMeasure& mu, Stream& s) {
  double u = s.uniform();
  for (std::size_t k = 0; k < mu.size(); ++k) {
    if (u < mu.weights[k]) return mu.points[k];
    u -= mu.weights[k];
  }
  return mu.points.back();
}

}  // namespace

ExperimentResult convergence_experiment(const ModelSpec& spec, std::uint64_t seed, double c,
                                        const EmpiricalMeasure& mu0_a,
                                        const EmpiricalMeasure& mu0_b,
                                        const ConvergenceOptions& opt) {
  mu0_a.validate();
  mu0_b.validate();
  const auto& cps = opt.checkpoints;
  if (cps.empty() || !std::is_sorted(cps.begin(), cps.end()))
    throw InputError("convergence_experiment: checkpoints must be nonempty and increasing");
  const std::size_t R = opt.replicas;
  std::vector<std::vector<HybridState>> A(cps.size(), std::vector<HybridState>(R)),
      B(cps.size(), std::vector<HybridState>(R));
  parallel_for(R, [&](std::size_t r) {
    Stream sa(derive_seed(seed, r));
    Stream sb(opt.common_numbers ? derive_seed(seed, r) : derive_seed(seed ^ 0xb0b0b0b0ULL, r));
    HybridState xa = draw_start(mu0_a, sa), xb = draw_start(mu0_b, sb);
    std::size_t n = 0;
    for (std::size_t k = 0; k < cps.size(); ++k) {
      for (; n < cps[k]; ++n) {
        xa = chain_step(spec, sa, xa);
        xb = chain_step(spec, sb, xb);
      }
      A[k][r] = xa;
      B[k][r] = xb;
    }
  });
  ExperimentResult res;
  res.name = "convergence";
  SeriesOutcome ser{"distances", {"n", "joint", "marginal"}, {}};
  std::vector<double> ns, joint;
  bool marginal_ok = true;
  double worst_excess = -1e300;
  for (std::size_t k = 0; k < cps.size(); ++k) {
    const auto ma = EmpiricalMeasure::uniform(A[k], c), mb = EmpiricalMeasure::uniform(B[k], c);
    const double dj = fm_distance(ma, mb);
    const double dm = fm_distance(marginalize_Y(ma), marginalize_Y(mb));
    ser.rows.push_back({static_cast<double>(cps[k]), dj, dm});
    ns.push_back(static_cast<double>(cps[k]));
    joint.push_back(dj);
    worst_excess = std::max(worst_excess, dm - dj);
    if (dm > dj + 1e-9) marginal_ok = false;
  }
  res.series.push_back(std::move(ser));
  if (std::count_if(joint.begin(), joint.end(), [](double d) { return d > 0; }) >= 5) {
    const GeometricFit fit = fit_geometric_rate(ns, joint);
    res.add_scalar("C", fit.C);
    res.add_scalar("beta", fit.beta);
    res.add_scalar("r2", fit.r2);
    res.add_verdict("geometric_decay", fit.beta < 1.0, fit.beta, 1.0, "fitted beta < 1");
    res.add_verdict("fit_quality", fit.r2 >= opt.r2_min, fit.r2, opt.r2_min, "R^2 of log-linear fit");
  } else {
    res.add_scalar("max_distance", *std::max_element(joint.begin(), joint.end()));
  }
  res.add_verdict("marginal_below_joint", marginal_ok, worst_excess, 1e-9,
                  "d_FM of Y-marginals <= joint d_FM at every checkpoint");
  return res;
}

}  // namespace pdmp
