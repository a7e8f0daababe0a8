#include "pdmp/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "pdmp/coupling.hpp"
#include "pdmp/manifest.hpp"
#include "pdmp/parallel.hpp"

namespace pdmp {

namespace fs = std::filesystem;

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "simulate-chain", "simulate-pdmp", "derive-constants", "check-assumptions", "verify-coupling",
      "fm-distance",    "invariant",     "relation-gw",      "slln-chain",        "slln-pdmp",
      "short-time",     "converge",      "operon-demo"};
  return names;
}

namespace {

// Single writer for one run: every file goes through here so the manifest
// inventory is exactly what was produced.
class Outputs {
 public:
  Outputs(fs::path dir, std::string spec_hash, std::uint64_t seed, std::string command)
      : dir_(std::move(dir)), hash_(std::move(spec_hash)), seed_(seed), command_(std::move(command)) {}

  void text(const std::string& name, const std::string& body) {
    std::ofstream f(dir_ / name, std::ios::binary);
    f << body;
    if (!f) throw InputError("cannot write " + (dir_ / name).string());
    files_.push_back(name);
  }
  std::string header() const { return "# spec_hash=" + hash_ + " seed=" + std::to_string(seed_) + "\n"; }
  void result(ExperimentResult r, const std::string& stem) {
    r.digest["spec_hash"] = hash_;
    r.digest["seed"] = std::to_string(seed_);
    r.digest["command"] = command_;
    for (const auto& p : r.write(dir_, stem)) files_.push_back(p.filename().string());
    pass_ = pass_ && r.all_pass();
  }
  void fail() { pass_ = false; }
  bool pass() const { return pass_; }
  const std::vector<std::string>& files() const { return files_; }
  const std::string& hash() const { return hash_; }
  std::uint64_t seed() const { return seed_; }

 private:
  fs::path dir_;
  std::string hash_;
  std::uint64_t seed_;
  std::string command_;
  std::vector<std::string> files_;
  bool pass_ = true;
};

std::vector<double> log_spaced(double lo, double hi) {
  std::vector<double> out;
  for (double t = lo; t <= hi * (1.0 + 1e-12); t *= std::sqrt(10.0)) out.push_back(t);
  if (out.empty() || out.back() < hi * (1.0 - 1e-9)) out.push_back(hi);
  return out;
}

std::vector<std::size_t> to_sizes(const std::vector<double>& v) {
  std::vector<std::size_t> out;
  for (double x : v) out.push_back(static_cast<std::size_t>(std::llround(x)));
  return out;
}

std::string state_row(const HybridState& x) {
  std::string s;
  for (Eigen::Index k = 0; k < x.y.size(); ++k) s += fmt(x.y[k]) + ",";
  return s + std::to_string(x.i + 1);
}

std::string y_columns(int d) {
  std::string s;
  for (int k = 1; k <= d; ++k) s += "y" + std::to_string(k) + ",";
  return s + "regime";
}

// Long-run reference value of <f, invariant law> for the SLLN checks.
double chain_reference(const ModelSpec& spec, std::uint64_t seed, const StateFn& f, const HybridState& x0,
                       std::size_t burn, std::size_t n) {
  Stream s(seed);
  HybridState x = x0;
  for (std::size_t k = 0; k < burn; ++k) x = chain_step(spec, s, x);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    x = chain_step(spec, s, x);
    acc += f(x.y, x.i);
  }
  return acc / static_cast<double>(n);
}

ExperimentResult ensemble_distance(const ModelSpec& spec, const LoadedConfig& cfg, double c,
                                   std::uint64_t seed) {
  const auto& b = cfg.budget;
  const std::size_t n = b.count("replicas", 500), steps = b.count("steps", 1);
  std::vector<HybridState> a(n), z(n);
  parallel_for(n, [&](std::size_t r) {
    Stream s1(derive_seed(seed, 2 * r)), s2(derive_seed(seed, 2 * r + 1));
    HybridState x1 = cfg.start, x2 = cfg.start2;
    for (std::size_t k = 0; k < steps; ++k) {
      x1 = chain_step(spec, s1, x1);
      x2 = chain_step(spec, s2, x2);
    }
    a[r] = x1;
    z[r] = x2;
  });
  const auto mu1 = EmpiricalMeasure::uniform(a, c), mu2 = EmpiricalMeasure::uniform(z, c);
  ExperimentResult r;
  r.name = "fm_distance";
  const double joint = fm_distance(mu1, mu2);
  const double marginal = fm_distance(marginalize_Y(mu1), marginalize_Y(mu2));
  const double lower = fm_distance_dictionary(mu1, mu2, default_dictionary(mu1, mu2, spec.regimes));
  r.add_scalar("steps", static_cast<double>(steps));
  r.add_scalar("replicas", static_cast<double>(n));
  r.add_scalar("c", c);
  r.add_scalar("fm_joint", joint);
  r.add_scalar("fm_marginal", marginal);
  r.add_scalar("dictionary_lower_bound", lower);
  r.add_verdict("dictionary_below_exact", lower <= joint + 1e-9, lower, joint);
  r.add_verdict("marginal_below_joint", marginal <= joint + 1e-9, marginal, joint);
  return r;
}

void run_body(const std::string& cmd, const LoadedConfig& cfg, Outputs& out, std::ostream& log) {
  const ModelSpec& spec = cfg.spec;
  const Budget& b = cfg.budget;
  const std::uint64_t seed = out.seed();
  const double lam = spec.jump_rate;
  auto constants = [&] { return derive_constants(spec, cfg.inputs, cfg.derive); };

  if (cmd == "simulate-chain") {
    Stream s(seed);
    const auto traj = simulate_chain(spec, s, cfg.start, b.count("steps", 1000));
    std::ostringstream os;
    write_trajectory_csv(os, traj, out.hash(), seed);
    out.text("trajectory.csv", os.str());
  } else if (cmd == "simulate-pdmp") {
    Stream s(seed);
    const double horizon = b.get("horizon", 100.0 / lam);
    const auto path = simulate_pdmp(spec, s, cfg.start, horizon);
    std::ostringstream jumps, grid;
    write_trajectory_csv(jumps, path.chain, out.hash(), seed);
    const std::size_t g = std::max<std::size_t>(b.count("grid", 1000), 1);
    grid << out.header() << "t," << y_columns(spec.dim) << "\n";
    for (std::size_t k = 0; k <= g; ++k) {
      const double t = horizon * static_cast<double>(k) / static_cast<double>(g);
      grid << fmt(t) << "," << state_row(evaluate(spec, path, t)) << "\n";
    }
    out.text("jumps.csv", jumps.str());
    out.text("path_grid.csv", grid.str());
  } else if (cmd == "derive-constants") {
    out.text("constants.txt", out.header() + constants_report(constants()));
  } else if (cmd == "check-assumptions") {
    const auto k = constants();
    AssumptionBudget ab;
    ab.pairs = static_cast<int>(b.count("pairs", 200));
    ab.mc_draws = static_cast<int>(b.count("draws", 2000));
    ab.seed = derive_seed(seed, 1);
    const auto rep = verify_assumptions(spec, k, ab);
    out.text("assumptions.txt", out.header() + assumption_report_text(rep));
    if (!rep.all_pass()) out.fail();
  } else if (cmd == "verify-coupling") {
    const auto k = constants();
    CouplingBudget cb;
    cb.pairs = static_cast<int>(b.count("pairs", 50));
    cb.states = static_cast<int>(b.count("states", 50));
    cb.draws = static_cast<long>(b.count("draws", 10000));
    const auto rep = verify_B_conditions(spec, k, derive_seed(seed, 1), cb);
    std::ostringstream pairs;
    write_pair_csv(pairs, rep, out.hash(), seed);
    std::vector<CoupledState> starts(b.count("replicas", 200), CoupledState{cfg.start, cfg.start2});
    const auto tail = kappa_tail(spec, k, derive_seed(seed, 2), starts, static_cast<long>(b.count("max_steps", 10000)));
    std::ostringstream txt;
    txt << out.header() << coupling_report_text(rep);
    txt << "kappa_median = " << fmt(tail.median_kappa) << "\nkappa_censored = " << tail.censored << "\n";
    for (std::size_t z = 0; z < tail.zetas.size(); ++z)
      txt << "kappa_moment_" << fmt(tail.zetas[z]) << " = " << fmt(tail.mean[z]) << " +- " << fmt(tail.se[z])
          << (tail.stable[z] ? "" : " (unstable)") << "\n";
    txt << "kappa_smallest_stable_zeta = " << fmt(tail.smallest_stable_zeta) << "\n";
    out.text("coupling.txt", txt.str());
    out.text("coupling_pairs.csv", pairs.str());
    if (!rep.all_pass()) out.fail();
  } else if (cmd == "fm-distance") {
    out.result(ensemble_distance(spec, cfg, constants().c, seed), "fm_distance");
  } else if (cmd == "invariant") {
    const double c = constants().c;
    Stream s1(derive_seed(seed, 1)), s2(derive_seed(seed, 2));
    const std::size_t n = b.count("samples", 10000), burn = b.count("burn_in", 1000);
    const auto chain = estimate_invariant_chain(spec, s1, cfg.start, burn, n, b.count("thin", 10), c);
    const double burn_t = static_cast<double>(burn) / lam;
    const double horizon = burn_t + static_cast<double>(n) * 10.0 / lam;
    const auto pdmp = estimate_invariant_pdmp(spec, s2, cfg.start, horizon, equally_spaced_times(burn_t, horizon, n), c);
    ExperimentResult r;
    r.name = "invariant";
    for (auto [tag, mu] : {std::pair{"chain", &chain}, std::pair{"pdmp", &pdmp}}) {
      Vec mean = Vec::Zero(spec.dim);
      std::vector<double> freq(spec.regimes, 0.0);
      for (std::size_t k = 0; k < mu->size(); ++k) {
        mean += mu->weights[k] * mu->points[k].y;
        freq[mu->points[k].i] += mu->weights[k];
      }
      for (int k = 0; k < spec.dim; ++k) r.add_scalar(std::string(tag) + "_mean_y" + std::to_string(k + 1), mean[k]);
      for (int i = 0; i < spec.regimes; ++i)
        r.add_scalar(std::string(tag) + "_regime_" + std::to_string(i + 1), freq[i]);
      r.add_scalar(std::string(tag) + "_lyapunov_moment", lyapunov_moment(*mu, spec.reference_point));
      std::ostringstream os;
      write_measure_csv(os, *mu, out.hash(), seed);
      out.text(std::string("invariant_") + tag + ".csv", os.str());
    }
    out.result(r, "invariant");
  } else if (cmd == "relation-gw") {
    const double c = constants().c;
    Stream s1(derive_seed(seed, 1)), s2(derive_seed(seed, 2)), s3(derive_seed(seed, 3));
    const std::size_t n = b.count("samples", 10000), burn = b.count("burn_in", 1000);
    const auto mu = estimate_invariant_chain(spec, s1, cfg.start, burn, n, b.count("thin", 10), c);
    const double burn_t = static_cast<double>(burn) / lam;
    const double horizon = burn_t + static_cast<double>(n) * 10.0 / lam;
    const auto nu = estimate_invariant_pdmp(spec, s2, cfg.start, horizon, equally_spaced_times(burn_t, horizon, n), c);
    FmBudget fb{b.count("fm_cap", 20000), static_cast<int>(b.count("fm_runs", 3))};
    out.result(check_relation_G(spec, s3, mu, nu, static_cast<int>(b.count("per_point_draws", 1)), b.get("tol", 0.08), fb),
               "relation_G");
    // The start plus typical states: from far-out states the one-step law is
    // spread so widely that two-sample noise alone approaches the tolerance.
    std::vector<HybridState> states = {cfg.start};
    for (std::size_t k = 1; states.size() < b.count("states", 5); ++k) states.push_back(mu.points[(k * 7919) % mu.size()]);
    for (std::size_t k = 0; k < states.size(); ++k) {
      Stream s(derive_seed(seed, 100 + k));
      out.result(check_P_equals_GW(spec, s, states[k], b.count("draws", 10000), c, 0.03),
                 "P_equals_GW_" + std::to_string(k + 1));
    }
  } else if (cmd == "slln-chain") {
    const auto f = min_one_norm();
    const std::size_t n = b.count("steps", 100000);
    const double ref = chain_reference(spec, derive_seed(seed, 1), f.f, cfg.start, b.count("burn_in", 1000),
                                       b.count("reference_samples", 1000000));
    const auto cps = to_sizes(b.list("checkpoints", log_spaced(100.0, static_cast<double>(n))));
    SllnOptions so;
    so.replicas = static_cast<int>(b.count("replicas", 32));
    so.tol = b.get("tol", 0.02);
    out.result(slln_chain(spec, derive_seed(seed, 2), f, cfg.start, cps, ref, so), "slln_chain");
  } else if (cmd == "slln-pdmp") {
    const auto f = min_one_norm();
    const double horizon = b.get("horizon", 1e4 / lam);
    Stream s(derive_seed(seed, 1));
    const double burn_t = b.get("burn_in", 1000) / lam;
    const auto ref_path = simulate_pdmp(spec, s, cfg.start, burn_t + 10.0 * horizon);
    const double ref = (time_average(spec, ref_path, f.f, burn_t + 10.0 * horizon) * (burn_t + 10.0 * horizon) -
                        time_average(spec, ref_path, f.f, burn_t) * burn_t) /
                       (10.0 * horizon);
    SllnOptions so;
    so.replicas = static_cast<int>(b.count("replicas", 32));
    so.tol = b.get("tol", 0.03);
    const auto cps = b.list("checkpoints", log_spaced(horizon / 100.0, horizon));
    out.result(slln_pdmp(spec, cfg.inputs, derive_seed(seed, 2), f, cfg.start, cps, ref, so), "slln_pdmp");
    Stream s2(derive_seed(seed, 3));
    const auto path = simulate_pdmp(spec, s2, cfg.start, horizon);
    ExperimentResult gap;
    gap.name = "cd_conv_gap";
    const double g = cd_conv_gap(spec, path, f.f, horizon);
    gap.add_scalar("gap", g);
    gap.add_verdict("gap_small", std::abs(g) <= 0.05, std::abs(g), 0.05);
    out.result(gap, "cd_conv_gap");
    const std::size_t segs = std::min<std::size_t>(path.chain.steps(), b.count("samples", 100000));
    out.result(martingale_diagnostics(spec, path, f, segs), "martingale");
  } else if (cmd == "short-time") {
    std::vector<double> grid = b.list("t_grid", {0.02, 0.05, 0.1, 0.2});
    if (!b.has("t_grid"))
      for (double& t : grid) t /= lam;
    const std::size_t draws = b.count("draws", 20000);
    ShortTimeOptions unit;
    unit.unit_observable = true;
    unit.seeds = static_cast<int>(b.count("seeds", 5));
    out.result(short_time_check(spec, derive_seed(seed, 1), constant_one(), cfg.start, grid, draws, unit),
               "short_time_unit");
    ShortTimeOptions lip;
    lip.seeds = unit.seeds;
    out.result(short_time_check(spec, derive_seed(seed, 2), min_one_norm(), cfg.start, grid, draws, lip),
               "short_time_lipschitz");
  } else if (cmd == "converge") {
    const double c = constants().c;
    ConvergenceOptions co;
    co.replicas = b.count("replicas", 2000);
    co.checkpoints = to_sizes(b.list("checkpoints", {1, 2, 4, 8, 16, 32}));
    out.result(convergence_experiment(spec, seed, c, EmpiricalMeasure::uniform({cfg.start}, c),
                                      EmpiricalMeasure::uniform({cfg.start2}, c), co),
               "converge");
  } else if (cmd == "operon-demo") {
    if (!cfg.operon) throw InputError("operon-demo needs model.kind = gene");
    DemoBudget db;
    db.burn_in = b.get("burn_in", db.burn_in);
    db.samples = b.count("samples", db.samples);
    db.horizon = b.get("horizon", db.burn_in + static_cast<double>(db.samples));
    db.slln_horizon = b.get("horizon", db.slln_horizon);
    db.slln_replicas = static_cast<int>(b.count("replicas", db.slln_replicas));
    db.convergence_replicas = b.count("replicas", db.convergence_replicas);
    db.checkpoints = to_sizes(b.list("checkpoints", {1, 2, 4, 8, 16, 32}));
    db.start_level = b.get("start_level", db.start_level);
    db.bins = static_cast<int>(b.count("bins", db.bins));
    const auto contraction = flow_contraction_check(spec, cfg.operon->alpha_bar, 200, {0.0, 0.1, 0.5, 1.0, 2.0, 5.0},
                                                    derive_seed(seed, 9));
    ExperimentResult fc;
    fc.name = "flow_contraction";
    fc.add_verdict("ratio_at_most_one", contraction.pass, contraction.max_ratio, 1.0 + 1e-6);
    SeriesOutcome rows{"ratio", {"t", "max_ratio"}, {}};
    for (const auto& row : contraction.rows) rows.rows.push_back({row.t, row.max_ratio});
    fc.series.push_back(rows);
    out.result(fc, "flow_contraction");
    for (auto& r : operon_demo(*cfg.operon, constants().c, seed, db)) {
      const std::string stem = r.name;
      out.result(std::move(r), stem);
    }
  } else {
    throw InputError("unknown subcommand '" + cmd + "'");
  }
  log << cmd << ": " << out.files().size() << " file(s) written\n";
}

std::map<std::string, std::string> versions() {
  return {{"pdmp", "1.0.0"}, {"output_format", "1"}};
}

}  // namespace

int run_command(const std::string& command, const LoadedConfig& cfg, std::uint64_t seed, const fs::path& out,
                std::ostream& log) {
  RunManifest m;
  m.command = command;
  m.config_text = cfg.text;
  m.config_origin = cfg.origin;
  m.spec_hash = cfg.spec_hash;
  m.seed = seed;
  m.versions = versions();
  m.budget = cfg.budget.values();
  m.started = utc_timestamp();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    log << "error: cannot create output directory " << out << ": " << ec.message() << "\n";
    return 2;
  }
  Outputs o(out, cfg.spec_hash, seed, command);
  int code = 0;
  try {
    run_body(command, cfg, o, log);
    code = o.pass() ? 0 : 1;
  } catch (const std::exception& e) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["error"] = e.what();
    o.text("error.json", j.dump(2) + "\n");
    log << "error: " << e.what() << "\n";
    code = 2;
  }
  m.finished = utc_timestamp();
  m.exit_code = code;
  for (const auto& f : o.files()) m.outputs.push_back({f, sha256_file(out / f)});
  std::ofstream(out / "manifest.json", std::ios::binary) << m.to_json();
  if (code == 1) log << command << ": at least one verdict failed\n";
  return code;
}

int replay(const fs::path& manifest, const fs::path& out, std::ostream& log) {
  RunManifest m;
  LoadedConfig cfg;
  try {
    m = RunManifest::load(manifest);
    cfg = parse_config(m.config_text, m.config_origin.empty() ? "<manifest>" : m.config_origin);
    for (const auto& [k, v] : m.budget) cfg.budget.set(k, v);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 2;
  }
  if (cfg.spec_hash != m.spec_hash) {
    log << "replay: spec hash differs (" << cfg.spec_hash << " vs " << m.spec_hash << ")\n";
    return 1;
  }
  const int code = run_command(m.command, cfg, m.seed, out, log);
  if (code != m.exit_code) log << "replay: exit code " << code << " differs from recorded " << m.exit_code << "\n";
  bool same = code == m.exit_code;
  for (const auto& o : m.outputs) {
    const fs::path p = out / o.file;
    const std::string got = fs::exists(p) ? sha256_file(p) : "missing";
    if (got != o.sha256) {
      log << "replay: " << o.file << " differs\n";
      same = false;
    }
  }
  const auto fresh = RunManifest::load(out / "manifest.json");
  if (fresh.outputs.size() != m.outputs.size()) {
    log << "replay: output inventory differs\n";
    same = false;
  }
  log << "replay: " << (same ? "all digests match" : "digest mismatch") << "\n";
  return same ? 0 : 1;
}

}  // namespace pdmp
