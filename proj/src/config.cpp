#include "pdmp/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pdmp/manifest.hpp"

namespace pdmp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_numbers(const std::string& v, std::vector<double>& out) {
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) return false;
    std::size_t used = 0;
    try {
      out.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      return false;
    }
    if (used != item.size()) return false;
  }
  return !out.empty();
}

const std::set<std::string> kSections = {"model", "switching", "constants", "start", "budget", "run"};

}  // namespace

ConfigText ConfigText::parse(const std::string& text, const std::string& origin) {
  ConfigText c;
  c.origin_ = origin;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(raw.substr(0, raw.find('#')));
    if (s.empty()) continue;
    const std::string loc = origin + ":" + std::to_string(line);
    if (s.front() == '[') {
      if (s.back() != ']') throw InputError(loc + ": malformed section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      if (!kSections.count(section)) throw InputError(loc + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InputError(loc + ": expected key = value, got '" + s + "'");
    if (section.empty()) throw InputError(loc + ": key outside of any section");
    const std::string key = section + "." + trim(s.substr(0, eq));
    ConfigEntry e;
    e.text = trim(s.substr(eq + 1));
    e.line = line;
    if (e.text.empty()) throw InputError(loc + ": " + key + " has no value");
    if (!parse_numbers(e.text, e.numbers)) e.numbers.clear();
    if (c.entries_.count(key))
      throw InputError(loc + ": " + key + " already set on line " + std::to_string(c.entries_[key].line));
    c.entries_[key] = std::move(e);
  }
  return c;
}

std::string ConfigText::where(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? origin_ : origin_ + ":" + std::to_string(it->second.line);
}

const ConfigEntry& ConfigText::at(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw InputError(origin_ + ": missing required key " + key);
  return it->second;
}

std::vector<double> ConfigText::numbers(const std::string& key) const {
  const auto& e = at(key);
  if (e.numbers.empty()) throw InputError(where(key) + ": " + key + " must be numeric, got '" + e.text + "'");
  return e.numbers;
}

double ConfigText::number(const std::string& key) const {
  const auto v = numbers(key);
  if (v.size() != 1) throw InputError(where(key) + ": " + key + " must be a single number");
  return v[0];
}

std::optional<double> ConfigText::number_or(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return number(key);
}

std::string ConfigText::word(const std::string& key) const { return at(key).text; }

std::string ConfigText::canonical(const std::vector<std::string>& sections) const {
  std::string out;
  for (const auto& [k, e] : entries_) {
    const std::string sec = k.substr(0, k.find('.'));
    if (std::find(sections.begin(), sections.end(), sec) == sections.end()) continue;
    out += k + " = ";
    if (e.numbers.empty()) {
      out += e.text;
    } else {
      for (std::size_t j = 0; j < e.numbers.size(); ++j) out += (j ? "," : "") + fmt(e.numbers[j]);
    }
    out += "\n";
  }
  return out;
}

const std::vector<std::string>& Budget::keys() {
  static const std::vector<std::string> k = {
      "steps",     "horizon", "replicas",        "draws",          "samples",    "burn_in",
      "thin",      "pairs",   "states",          "fm_cap",         "fm_runs",    "checkpoints",
      "t_grid",    "tol",     "per_point_draws", "reference_samples", "max_steps", "grid",
      "bins",      "start_level", "seeds"};
  return k;
}

void Budget::set(const std::string& key, std::vector<double> v) {
  const auto& k = keys();
  if (std::find(k.begin(), k.end(), key) == k.end()) throw InputError("unknown budget key budget." + key);
  if (v.empty()) throw InputError("budget." + key + " needs a value");
  for (double x : v)
    if (!std::isfinite(x) || x < 0.0) throw InputError("budget." + key + " must be finite and nonnegative");
  values_[key] = std::move(v);
}

void Budget::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InputError("--budget expects key=value, got '" + assignment + "'");
  std::vector<double> v;
  const std::string key = trim(assignment.substr(0, eq));
  if (!parse_numbers(assignment.substr(eq + 1), v))
    throw InputError("--budget " + key + ": value must be numeric");
  set(key, std::move(v));
}

double Budget::get(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second.front();
}

std::size_t Budget::count(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(std::llround(get(key, static_cast<double>(fallback))));
}

std::vector<double> Budget::list(const std::string& key, std::vector<double> fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

namespace {

Vec as_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

// A scalar is broadcast to every coordinate.
Vec vec_key(const ConfigText& c, const std::string& key, int dim) {
  const auto v = c.numbers(key);
  if (v.size() == 1) return Vec::Constant(dim, v[0]);
  if (static_cast<int>(v.size()) != dim)
    throw InputError(c.where(key) + ": " + key + " has " + std::to_string(v.size()) +
                     " entries, expected " + std::to_string(dim));
  return as_vec(v);
}

int int_key(const ConfigText& c, const std::string& key, int fallback, int lo) {
  const auto v = c.number_or(key);
  if (!v) return fallback;
  if (*v != std::floor(*v) || *v < lo)
    throw InputError(c.where(key) + ": " + key + " must be an integer >= " + std::to_string(lo));
  return static_cast<int>(*v);
}

Perturbation perturbation_from(const ConfigText& c, PerturbationKind fallback) {
  Perturbation p;
  p.kind = fallback;
  if (c.has("model.perturbation")) {
    const std::string w = c.word("model.perturbation");
    if (w == "point") p.kind = PerturbationKind::point;
    else if (w == "ball") p.kind = PerturbationKind::ball;
    else if (w == "box") p.kind = PerturbationKind::box;
    else throw InputError(c.where("model.perturbation") + ": model.perturbation must be point, ball or box");
  }
  p.eps = c.number_or("model.eps").value_or(0.0);
  if (p.eps < 0.0) throw InputError(c.where("model.eps") + ": model.eps must be nonnegative");
  p.eps_star = c.number_or("model.eps_star").value_or(p.eps);
  if (p.eps_star < p.eps) throw InputError(c.where("model.eps_star") + ": model.eps_star must be at least model.eps");
  if (p.eps == 0.0) p.kind = PerturbationKind::point;
  return p;
}

void check_keys(const ConfigText& c, const std::string& kind, int regimes) {
  std::set<std::string> allowed = {"model.kind", "model.dim", "model.jump_rate", "model.burst_upper",
                                   "model.perturbation", "model.eps", "model.eps_star",
                                   "start.y", "start.regime", "start.y2", "start.regime2", "run.seed",
                                   "constants.L", "constants.alpha", "constants.lcal", "constants.lcal_slope",
                                   "constants.L_w", "constants.L_p", "constants.L_pi", "constants.delta_p",
                                   "constants.delta_pi", "constants.grid_points", "constants.mc_draws"};
  if (kind == "gene") {
    for (const char* k : {"model.rates", "model.burst", "model.beta_min", "model.beta_max"}) allowed.insert(k);
  } else {
    for (const char* k : {"model.regimes", "model.jump_scale"}) allowed.insert(k);
    for (int i = 1; i <= regimes; ++i) {
      allowed.insert("model.rates_" + std::to_string(i));
      allowed.insert("model.center_" + std::to_string(i));
      allowed.insert("switching.row_" + std::to_string(i));
    }
  }
  for (const auto& k : Budget::keys()) allowed.insert("budget." + k);
  for (const auto& [k, e] : c.entries())
    if (!allowed.count(k)) throw InputError(c.origin() + ":" + std::to_string(e.line) + ": unknown key " + k);
}

void build_gene(const ConfigText& c, LoadedConfig& out) {
  OperonModel m;
  const int d = int_key(c, "model.dim", 1, 1);
  m.rates = c.has("model.rates") ? vec_key(c, "model.rates", d) : Vec::Ones(d);
  m.burst_upper = c.has("model.burst_upper") ? vec_key(c, "model.burst_upper", d) : Vec::Ones(d);
  m.jump_rate = c.number_or("model.jump_rate").value_or(1.0);
  if (c.has("model.burst")) {
    const std::string w = c.word("model.burst");
    if (w == "constant") m.burst.kind = BurstKind::constant;
    else if (w == "truncated_exponential") m.burst.kind = BurstKind::truncated_exponential;
    else throw InputError(c.where("model.burst") + ": model.burst must be constant or truncated_exponential");
  }
  m.burst.beta_min = c.number_or("model.beta_min").value_or(1.0);
  m.burst.beta_max = c.number_or("model.beta_max").value_or(m.burst.beta_min);
  m.perturbation = perturbation_from(c, PerturbationKind::box);
  out.operon = build_operon_spec(m);
  out.spec = out.operon->spec;
  out.inputs = out.operon->inputs;
}

void build_switching_linear(const ConfigText& c, LoadedConfig& out) {
  const int d = int_key(c, "model.dim", 1, 1);
  const int n = int_key(c, "model.regimes", 1, 1);
  ModelSpec& spec = out.spec;
  spec.name = "switching-linear";
  spec.dim = d;
  spec.regimes = n;
  spec.jump_rate = c.number_or("model.jump_rate").value_or(1.0);
  std::vector<Vec> rates, centers;
  for (int i = 1; i <= n; ++i) {
    const std::string rk = "model.rates_" + std::to_string(i), ck = "model.center_" + std::to_string(i);
    rates.push_back(vec_key(c, rk, d));
    if (!(rates.back().minCoeff() > 0.0)) throw InputError(c.where(rk) + ": " + rk + " must be positive");
    centers.push_back(c.has(ck) ? vec_key(c, ck, d) : Vec::Zero(d));
  }
  for (int i = 0; i < n; ++i) {
    const Vec a = rates[i], m = centers[i];
    spec.flows.push_back(Flow{[a, m](double t, const Vec& y) -> Vec {
                                return m + ((-t * a).array().exp() * (y - m).array()).matrix();
                              },
                              [a, m](const Vec& y) -> Vec { return -(a.array() * (y - m).array()).matrix(); }});
  }
  const double scale = c.number_or("model.jump_scale").value_or(1.0);
  if (!(scale > 0.0)) throw InputError(c.where("model.jump_scale") + ": model.jump_scale must be positive");
  spec.theta_upper = c.has("model.burst_upper") ? vec_key(c, "model.burst_upper", d) : Vec::Ones(d);
  if (!(spec.theta_upper.minCoeff() > 0.0)) throw InputError("model.burst_upper must be positive");
  spec.jump_map = [scale](const Vec& th, const Vec& y) -> Vec { return scale * y + th; };
  const double vol = spec.theta_upper.prod();
  const Vec up = spec.theta_upper;
  spec.jump_density = [vol, up](const Vec&, const Vec& th) {
    for (Eigen::Index k = 0; k < th.size(); ++k)
      if (th[k] < 0.0 || th[k] > up[k]) return 0.0;
    return 1.0 / vol;
  };
  spec.p_max = 1.0 / vol;
  spec.perturbation = perturbation_from(c, PerturbationKind::ball);
  spec.reference_point = Vec::Zero(d);

  Eigen::MatrixXd pi(n, n);
  for (int i = 1; i <= n; ++i) {
    const std::string rk = "switching.row_" + std::to_string(i);
    std::vector<double> row;
    if (c.has(rk)) {
      row = c.numbers(rk);
    } else if (n == 1) {
      row = {1.0};
    } else {
      throw InputError(c.origin() + ": missing required key " + rk);
    }
    if (static_cast<int>(row.size()) != n)
      throw InputError(c.where(rk) + ": " + rk + " has " + std::to_string(row.size()) + " entries, expected " +
                       std::to_string(n));
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (row[j] < 0.0) throw InputError(c.where(rk) + ": " + rk + " has a negative entry");
      pi(i - 1, j) = row[j];
      sum += row[j];
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw InputError(c.where(rk) + ": " + rk + " sums to " + fmt(sum) + ", expected 1");
  }
  spec.switching = [pi](int i, int j, const Vec&) { return pi(i, j); };

  std::ostringstream fp;
  fp << "switching-linear " << c.canonical({"model", "switching"});
  spec.fingerprint = fp.str();
  validate_spec(spec, 0x5117);

  // |S_i(t,y) - S_j(t,y)| <= t sup_s |F_i - F_j|(S_j(s,y)), and S_j stays
  // within |y| + |m_j| of the origin.
  double min_rate = rates[0].minCoeff(), l1 = 0.0, l0 = 0.0, cmax = 0.0;
  for (int i = 0; i < n; ++i) {
    min_rate = std::min(min_rate, rates[i].minCoeff());
    cmax = std::max(cmax, centers[i].norm());
    for (int j = 0; j < n; ++j) {
      l1 = std::max(l1, (rates[i] - rates[j]).cwiseAbs().maxCoeff());
      l0 = std::max(l0, (rates[i].cwiseProduct(centers[i]) - rates[j].cwiseProduct(centers[j])).norm());
    }
  }
  AssumptionInputs& in = out.inputs;
  in.L = 1.0;
  in.alpha = -min_rate;
  in.lcal = {l0 + l1 * cmax, l1};
  in.L_w = scale;
  in.L_p = 0.0;
  in.L_pi = 0.0;
  in.delta_p = 1.0;
  // rows are compared pairwise, including a row with another row
  in.delta_pi = 1.0;
  for (int i1 = 0; i1 < n; ++i1)
    for (int i2 = 0; i2 < n; ++i2) in.delta_pi = std::min(in.delta_pi, pi.row(i1).cwiseMin(pi.row(i2)).sum());
  if (!(in.delta_pi > 0.0)) throw InputError(c.origin() + ": switching rows share no mass, so no minorization holds");
}

HybridState state_key(const ConfigText& c, const std::string& ykey, const std::string& rkey,
                      const LoadedConfig& out, const Vec& fallback, int regime_fallback) {
  HybridState x{fallback, regime_fallback};
  if (c.has(ykey)) x.y = vec_key(c, ykey, out.spec.dim);
  if (c.has(rkey)) {
    const int r = int_key(c, rkey, 1, 1);
    if (r > out.spec.regimes)
      throw InputError(c.where(rkey) + ": " + rkey + " = " + std::to_string(r) + " exceeds model regimes");
    x.i = r - 1;
  }
  if (!out.spec.contains(x.y)) throw InputError(c.where(ykey) + ": " + ykey + " lies outside the state set");
  return x;
}

}  // namespace

LoadedConfig parse_config(const std::string& text, const std::string& origin) {
  const ConfigText c = ConfigText::parse(text, origin);
  LoadedConfig out;
  out.text = text;
  out.origin = origin;
  out.kind = c.has("model.kind") ? c.word("model.kind") : "gene";
  if (out.kind != "gene" && out.kind != "switching-linear")
    throw InputError(c.where("model.kind") + ": model.kind must be gene or switching-linear");
  int regimes = 1;
  if (out.kind == "switching-linear") regimes = int_key(c, "model.regimes", 1, 1);
  check_keys(c, out.kind, regimes);
  if (auto lam = c.number_or("model.jump_rate"); lam && !(*lam > 0.0))
    throw InputError(c.where("model.jump_rate") + ": model.jump_rate must be positive");

  try {
    if (out.kind == "gene")
      build_gene(c, out);
    else
      build_switching_linear(c, out);
  } catch (const SpecError& e) {
    throw InputError(origin + ": " + e.what());
  }

  AssumptionInputs& in = out.inputs;
  auto over = [&](const char* key, double& field) {
    if (auto v = c.number_or(std::string("constants.") + key)) field = *v;
  };
  over("L", in.L);
  over("alpha", in.alpha);
  over("lcal", in.lcal.l0);
  over("lcal_slope", in.lcal.l1);
  over("L_w", in.L_w);
  over("L_p", in.L_p);
  over("L_pi", in.L_pi);
  over("delta_p", in.delta_p);
  over("delta_pi", in.delta_pi);
  if (!(in.alpha < out.spec.jump_rate))
    throw InputError(c.where("constants.alpha") + ": constants.alpha = " + fmt(in.alpha) +
                     " must be smaller than model.jump_rate = " + fmt(out.spec.jump_rate) +
                     " (flow growth must stay below the jump rate)");
  for (auto [key, v] : {std::pair{"constants.L", in.L}, std::pair{"constants.L_w", in.L_w}})
    if (!(v > 0.0)) throw InputError(c.where(key) + ": " + std::string(key) + " must be positive");
  for (auto [key, v] : {std::pair{"constants.delta_p", in.delta_p}, std::pair{"constants.delta_pi", in.delta_pi}})
    if (!(v > 0.0 && v <= 1.0)) throw InputError(c.where(key) + ": " + std::string(key) + " must lie in (0, 1]");
  for (auto [key, v] : {std::pair{"constants.L_p", in.L_p}, std::pair{"constants.L_pi", in.L_pi},
                        std::pair{"constants.lcal", in.lcal.l0}, std::pair{"constants.lcal_slope", in.lcal.l1}})
    if (v < 0.0) throw InputError(c.where(key) + ": " + std::string(key) + " must be nonnegative");
  out.derive.grid_points = int_key(c, "constants.grid_points", out.derive.grid_points, 1);
  out.derive.mc_draws = int_key(c, "constants.mc_draws", out.derive.mc_draws, 1);

  const int d = out.spec.dim;
  out.start = state_key(c, "start.y", "start.regime", out, Vec::Zero(d), 0);
  out.start2 = state_key(c, "start.y2", "start.regime2", out, Vec::Constant(d, 5.0), out.start.i);

  for (const auto& [k, e] : c.entries()) {
    if (k.rfind("budget.", 0) != 0) continue;
    if (e.numbers.empty()) throw InputError(c.where(k) + ": " + k + " must be numeric");
    try {
      out.budget.set(k.substr(7), e.numbers);
    } catch (const InputError& err) {
      throw InputError(c.where(k) + ": " + err.what());
    }
  }
  if (auto s = c.number_or("run.seed")) {
    if (*s < 0 || *s != std::floor(*s)) throw InputError(c.where("run.seed") + ": run.seed must be a nonnegative integer");
    out.seed = static_cast<std::uint64_t>(*s);
  }
  out.spec_hash = sha256_hex(out.kind + "\n" + c.canonical({"model", "switching", "constants"}));
  return out;
}

LoadedConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace pdmp
