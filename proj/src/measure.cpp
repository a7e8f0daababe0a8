#include "pdmp/measure.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <queue>
#include <unordered_set>

#include "pdmp/network_simplex.hpp"
#include "pdmp/parallel.hpp"
#include "pdmp/samplers.hpp"

namespace pdmp {

EmpiricalMeasure EmpiricalMeasure::uniform(std::vector<HybridState> pts, double c) {
  EmpiricalMeasure mu;
  const double w = pts.empty() ? 0.0 : 1.0 / static_cast<double>(pts.size());
  mu.weights.assign(pts.size(), w);
  mu.points = std::move(pts);
  mu.c = c;
  return mu;
}

void EmpiricalMeasure::validate() const {
  if (points.size() != weights.size())
    throw InputError("empirical measure: " + std::to_string(points.size()) + " points but " +
                     std::to_string(weights.size()) + " weights");
  if (points.empty()) throw InputError("empirical measure is empty");
  if (!(c > 0.0)) throw InputError("empirical measure: metric weight c must be positive");
  double s = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InputError("empirical measure: negative weight");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-12)
    throw InputError("empirical measure: weights sum to " + fmt(s) + ", not 1");
}

namespace {

struct Support {
  std::vector<const HybridState*> pts;
  std::vector<double> b;  // w1 on mu1's points, -w2 on mu2's
  double c = 1.0;
  int dim = 0;
};

Support combine(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2) {
  mu1.validate();
  mu2.validate();
  if (mu1.c != mu2.c) throw InputError("FM distance: the two measures use different metric weights");
  Support s;
  s.c = mu1.c;
  s.dim = static_cast<int>(mu1.points.front().y.size());
  for (std::size_t k = 0; k < mu1.size(); ++k) {
    s.pts.push_back(&mu1.points[k]);
    s.b.push_back(mu1.weights[k]);
  }
  for (std::size_t k = 0; k < mu2.size(); ++k) {
    s.pts.push_back(&mu2.points[k]);
    s.b.push_back(-mu2.weights[k]);
  }
  for (const auto* p : s.pts)
    if (p->y.size() != s.dim) throw InputError("FM distance: points of different dimension");
  return s;
}

// Flows are integral in units of 2^-40 so pivoting is exact; the objective
// is evaluated afterwards with the unrounded supplies.
std::vector<std::int64_t> integer_supply(const std::vector<double>& b) {
  constexpr double scale = 0x1.0p40;
  std::vector<std::int64_t> out(b.size());
  std::int64_t total = 0;
  std::size_t big = 0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    out[k] = std::llround(b[k] * scale);
    total += out[k];
    if (std::abs(b[k]) > std::abs(b[big])) big = k;
  }
  out[big] -= total;
  return out;
}

double rho(const Support& s, int u, int v) {
  return rho_c(s.pts[u]->y, s.pts[u]->i, s.pts[v]->y, s.pts[v]->i, s.c);
}

FmResult finish(const Support& s, const NetworkSimplex& ns) {
  FmResult r;
  r.witness.resize(s.pts.size());
  double d = 0.0;
  for (std::size_t u = 0; u < s.pts.size(); ++u) {
    r.witness[u] = ns.dual(static_cast<int>(u));
    d += s.b[u] * r.witness[u];
  }
  r.distance = std::max(0.0, d);
  r.arcs = ns.arcs();
  return r;
}

// k-d tree over the continuous coordinates. rho_c >= |y - y'|, so box
// distances in y are valid lower bounds for pruning.
class KdTree {
 public:
  KdTree(const Support& s) : s_(s), perm_(s.pts.size()) {
    std::iota(perm_.begin(), perm_.end(), 0);
    if (!perm_.empty()) build(0, static_cast<int>(perm_.size()));
  }

  std::vector<int> knn(int u, int k) const {
    std::priority_queue<std::pair<double, int>> heap;
    knn_rec(0, u, k, heap);
    std::vector<int> out;
    while (!heap.empty()) {
      out.push_back(heap.top().second);
      heap.pop();
    }
    return out;
  }

  void set_values(const std::vector<double>& f) {
    f_ = &f;
    for (int n = static_cast<int>(nodes_.size()) - 1; n >= 0; --n) {
      Node& nd = nodes_[n];
      if (nd.left < 0) {
        nd.fmin = 1e300;
        for (int k = nd.begin; k < nd.end; ++k) nd.fmin = std::min(nd.fmin, f[perm_[k]]);
      } else {
        nd.fmin = std::min(nodes_[nd.left].fmin, nodes_[nd.right].fmin);
      }
    }
  }

  // Arcs u -> v with f_u - f_v > rho(u, v) + tol, most violated first.
  std::vector<std::pair<double, int>> violations(int u, double tol, std::size_t keep) const {
    std::vector<std::pair<double, int>> out;
    viol_rec(0, u, tol, out);
    std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.first > b.first; });
    if (out.size() > keep) out.resize(keep);
    return out;
  }

 private:
  struct Node {
    int begin, end, left = -1, right = -1;
    Vec lo, hi;
    double fmin = 0.0;
  };

  const Vec& y(int k) const { return s_.pts[k]->y; }

  int build(int b, int e) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{b, e, -1, -1, y(perm_[b]), y(perm_[b]), 0.0});
    Vec lo = y(perm_[b]), hi = lo;
    for (int k = b + 1; k < e; ++k) {
      lo = lo.cwiseMin(y(perm_[k]));
      hi = hi.cwiseMax(y(perm_[k]));
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (e - b > 8) {
      Eigen::Index dim;
      (hi - lo).maxCoeff(&dim);
      const int mid = (b + e) / 2;
      std::nth_element(perm_.begin() + b, perm_.begin() + mid, perm_.begin() + e,
                       [&](int p, int q) { return y(p)[dim] < y(q)[dim]; });
      const int l = build(b, mid);
      const int r = build(mid, e);
      nodes_[id].left = l;
      nodes_[id].right = r;
    }
    return id;
  }

  double box_dist(const Node& nd, const Vec& q) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < q.size(); ++k) {
      const double g = std::max({0.0, nd.lo[k] - q[k], q[k] - nd.hi[k]});
      s += g * g;
    }
    return std::sqrt(s);
  }

  void knn_rec(int n, int u, int k, std::priority_queue<std::pair<double, int>>& heap) const {
    const Node& nd = nodes_[n];
    if (static_cast<int>(heap.size()) == k && box_dist(nd, y(u)) >= heap.top().first) return;
    if (nd.left < 0) {
      for (int p = nd.begin; p < nd.end; ++p) {
        const int v = perm_[p];
        if (v == u) continue;
        const double d = rho(s_, u, v);
        if (static_cast<int>(heap.size()) < k) {
          heap.push({d, v});
        } else if (d < heap.top().first) {
          heap.pop();
          heap.push({d, v});
        }
      }
      return;
    }
    const double dl = box_dist(nodes_[nd.left], y(u));
    const double dr = box_dist(nodes_[nd.right], y(u));
    if (dl <= dr) {
      knn_rec(nd.left, u, k, heap);
      knn_rec(nd.right, u, k, heap);
    } else {
      knn_rec(nd.right, u, k, heap);
      knn_rec(nd.left, u, k, heap);
    }
  }

  void viol_rec(int n, int u, double tol, std::vector<std::pair<double, int>>& out) const {
    const Node& nd = nodes_[n];
    const double fu = (*f_)[u];
    if (fu - nd.fmin <= box_dist(nd, y(u)) + tol) return;
    if (nd.left < 0) {
      for (int p = nd.begin; p < nd.end; ++p) {
        const int v = perm_[p];
        if (v == u) continue;
        const double excess = fu - (*f_)[v] - rho(s_, u, v);
        if (excess > tol) out.push_back({excess, v});
      }
      return;
    }
    viol_rec(nd.left, u, tol, out);
    viol_rec(nd.right, u, tol, out);
  }

  const Support& s_;
  std::vector<int> perm_;
  std::vector<Node> nodes_;
  const std::vector<double>* f_ = nullptr;
};

}  // namespace

FmResult fm_solve_dense(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2) {
  const Support s = combine(mu1, mu2);
  const int m = static_cast<int>(s.pts.size());
  NetworkSimplex ns(integer_supply(s.b), 1.0);
  // Arcs at rho >= 2 never beat the detour through the hub.
  for (int u = 0; u < m; ++u)
    for (int v = 0; v < m; ++v) {
      if (u == v) continue;
      const double d = rho(s, u, v);
      if (d < 2.0) ns.add_arc(u, v, d);
    }
  const long pivots = ns.solve();
  FmResult r = finish(s, ns);
  r.pivots = pivots;
  r.rounds = 1;
  return r;
}

double fm_distance_exact(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2) {
  if (mu1.size() + mu2.size() > kExactSupportCap)
    throw PreconditionError("fm_distance_exact: combined support of " +
                            std::to_string(mu1.size() + mu2.size()) +
                            " points exceeds 500; use fm_distance_subsampled");
  return fm_solve_dense(mu1, mu2).distance;
}

FmResult fm_solve_sparse(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2,
                         const SparseOptions& opt) {
  const Support s = combine(mu1, mu2);
  const int m = static_cast<int>(s.pts.size());
  NetworkSimplex ns(integer_supply(s.b), 1.0);
  KdTree tree(s);
  std::unordered_set<std::uint64_t> have;
  auto add = [&](int u, int v) {
    const std::uint64_t key = static_cast<std::uint64_t>(u) * m + v;
    if (!have.insert(key).second) return false;
    ns.add_arc(u, v, rho(s, u, v));
    return true;
  };

  std::vector<std::vector<int>> nbrs(m);
  const int k = std::min(opt.neighbours, m - 1);
  parallel_for(m, [&](std::size_t u) { nbrs[u] = tree.knn(static_cast<int>(u), k); });
  for (int u = 0; u < m; ++u)
    for (int v : nbrs[u]) {
      add(u, v);
      add(v, u);
    }

  FmResult r;
  long pivots = 0;
  std::vector<double> f(m);
  std::vector<std::vector<std::pair<double, int>>> viol(m);
  for (int round = 1;; ++round) {
    pivots += ns.solve();
    for (int u = 0; u < m; ++u) f[u] = ns.dual(u);
    tree.set_values(f);
    parallel_for(m, [&](std::size_t u) { viol[u] = tree.violations(static_cast<int>(u), 1e-10, 8); });
    long added = 0;
    for (int u = 0; u < m; ++u)
      for (auto& [excess, v] : viol[u]) added += add(u, v);
    if (added == 0) {
      r = finish(s, ns);
      r.rounds = round;
      break;
    }
    if (round >= opt.max_rounds) {
      // Potentials are still infeasible somewhere: report the primal cost,
      // which is an upper bound on the distance.
      r = finish(s, ns);
      r.distance = ns.primal_cost() * 0x1.0p-40;
      r.certified = false;
      r.rounds = round;
      break;
    }
  }
  r.pivots = pivots;
  return r;
}

double fm_distance(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2) {
  if (mu1.size() + mu2.size() <= kExactSupportCap) return fm_solve_dense(mu1, mu2).distance;
  return fm_solve_sparse(mu1, mu2).distance;
}

namespace {

EmpiricalMeasure resample(const EmpiricalMeasure& mu, Stream s, std::size_t n) {
  std::vector<double> cum(mu.size());
  std::partial_sum(mu.weights.begin(), mu.weights.end(), cum.begin());
  std::vector<HybridState> pts;
  pts.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = s.uniform() * cum.back();
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    const std::size_t idx = std::min<std::size_t>(it - cum.begin(), mu.size() - 1);
    pts.push_back(mu.points[idx]);
  }
  return EmpiricalMeasure::uniform(std::move(pts), mu.c);
}

}  // namespace

SubsampleResult fm_distance_subsampled(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2,
                                       std::uint64_t seed, std::size_t cap, int runs) {
  if (runs < 1) throw InputError("fm_distance_subsampled: runs must be positive");
  if (cap < 2) throw InputError("fm_distance_subsampled: cap must be at least 2");
  SubsampleResult out;
  if (mu1.size() + mu2.size() <= cap) {
    const double d = fm_distance(mu1, mu2);
    out.runs.assign(runs, d);
  } else {
    out.runs.resize(runs);
    parallel_for(static_cast<std::size_t>(runs), [&](std::size_t r) {
      const Stream s(derive_seed(seed, r));
      const auto a = mu1.size() > cap / 2 ? resample(mu1, s, cap / 2) : mu1;
      const auto b = mu2.size() > cap / 2 ? resample(mu2, s, cap / 2) : mu2;
      out.runs[r] = fm_distance(a, b);
    });
  }
  double sum = 0.0, sq = 0.0;
  for (double d : out.runs) {
    sum += d;
    sq += d * d;
  }
  out.mean = sum / runs;
  out.sd = runs > 1 ? std::sqrt(std::max(0.0, (sq - runs * out.mean * out.mean) / (runs - 1))) : 0.0;
  out.min = *std::min_element(out.runs.begin(), out.runs.end());
  out.max = *std::max_element(out.runs.begin(), out.runs.end());
  return out;
}

double fm_distance_dictionary(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2,
                              const std::vector<TestFunction>& dict, std::uint64_t seed,
                              int check_pairs) {
  const Support s = combine(mu1, mu2);
  const std::size_t m = s.pts.size();
  Stream st(seed);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (int k = 0; k < check_pairs; ++k) pairs.push_back({st.index(m), st.index(m)});
  constexpr double tol = 1e-9;
  double best = 0.0;
  std::vector<double> vals(m);
  for (const auto& tf : dict) {
    for (std::size_t u = 0; u < m; ++u) {
      vals[u] = tf.f(*s.pts[u]);
      if (!(std::abs(vals[u]) <= 1.0 + tol))
        throw InputError("dictionary function '" + tf.name + "' leaves [-1, 1]: value " +
                         fmt(vals[u]));
    }
    for (auto [u, v] : pairs)
      if (std::abs(vals[u] - vals[v]) > rho(s, static_cast<int>(u), static_cast<int>(v)) + tol)
        throw InputError("dictionary function '" + tf.name + "' is not 1-Lipschitz for rho_c");
    double acc = 0.0;
    for (std::size_t u = 0; u < m; ++u) acc += s.b[u] * vals[u];
    best = std::max(best, std::abs(acc));
  }
  return best;
}

std::vector<TestFunction> default_dictionary(const EmpiricalMeasure& mu1,
                                             const EmpiricalMeasure& mu2, int regimes,
                                             std::uint64_t seed) {
  const Support s = combine(mu1, mu2);
  const double c = s.c;
  std::vector<TestFunction> dict;
  Vec centre = Vec::Zero(s.dim);
  for (std::size_t u = 0; u < s.pts.size(); ++u) centre += 0.5 * std::abs(s.b[u]) * s.pts[u]->y;
  for (int k = 0; k < s.dim; ++k) {
    const double m = centre[k];
    dict.push_back({"ramp_" + std::to_string(k + 1), [k, m](const HybridState& x) {
                      return std::clamp(x.y[k] - m, -1.0, 1.0);
                    }});
  }
  Stream st(seed);
  for (int a = 0; a < 16; ++a) {
    const HybridState anchor = *s.pts[st.index(s.pts.size())];
    dict.push_back({"bump_" + std::to_string(a + 1), [anchor, c](const HybridState& x) {
                      return std::max(0.0, 1.0 - rho_c(x.y, x.i, anchor.y, anchor.i, c));
                    }});
  }
  if (regimes > 1) {
    const double scale = std::min(1.0, c);
    for (int r = 0; r < regimes; ++r)
      dict.push_back({"regime_" + std::to_string(r + 1),
                      [r, scale](const HybridState& x) { return x.i == r ? scale : 0.0; }});
  }
  return dict;
}

TestFunction lipschitz_extension(std::vector<HybridState> support, std::vector<double> values,
                                 double c) {
  if (support.size() != values.size() || support.empty())
    throw InputError("lipschitz_extension: support and values must be nonempty and match");
  return {"extension", [support = std::move(support), values = std::move(values), c](const HybridState& x) {
            double best = 1e300;
            for (std::size_t k = 0; k < support.size(); ++k)
              best = std::min(best, values[k] + rho_c(x.y, x.i, support[k].y, support[k].i, c));
            return std::clamp(best, -1.0, 1.0);
          }};
}

EmpiricalMeasure marginalize_Y(const EmpiricalMeasure& mu) {
  EmpiricalMeasure out;
  out.c = mu.c;
  std::map<std::vector<double>, std::size_t> index;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const Vec& y = mu.points[k].y;
    std::vector<double> key(y.data(), y.data() + y.size());
    auto [it, fresh] = index.try_emplace(std::move(key), out.points.size());
    if (fresh) {
      out.points.push_back({y, 0});
      out.weights.push_back(mu.weights[k]);
    } else {
      out.weights[it->second] += mu.weights[k];
    }
  }
  return out;
}

double lyapunov_moment(const EmpiricalMeasure& mu, const Vec& y_star) {
  double s = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) s += mu.weights[k] * (mu.points[k].y - y_star).norm();
  return s;
}

double integrate(const EmpiricalMeasure& mu, const std::function<double(const Vec&, int)>& f) {
  double s = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) s += mu.weights[k] * f(mu.points[k].y, mu.points[k].i);
  return s;
}

GeometricFit fit_geometric_rate(const std::vector<double>& ns, const std::vector<double>& ds,
                                double floor) {
  if (ns.size() != ds.size()) throw InputError("fit_geometric_rate: index and distance lengths differ");
  const auto positive = std::count_if(ds.begin(), ds.end(), [](double d) { return d > 0.0; });
  if (positive < 5)
    throw InputError("fit_geometric_rate: needs at least 5 positive distances, got " +
                     std::to_string(positive));
  if (!(floor > 0.0)) throw InputError("fit_geometric_rate: floor must be positive");
  GeometricFit fit;
  const std::size_t n = ns.size();
  std::vector<double> ly(n);
  for (std::size_t k = 0; k < n; ++k) {
    const bool low = !(ds[k] > floor);
    fit.floored.push_back(low);
    ly[k] = std::log(low ? floor : ds[k]);
  }
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += ns[k];
    my += ly[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (ns[k] - mx) * (ns[k] - mx);
    sxy += (ns[k] - mx) * (ly[k] - my);
    syy += (ly[k] - my) * (ly[k] - my);
  }
  if (sxx == 0.0) throw InputError("fit_geometric_rate: all indices are equal");
  fit.slope = sxy / sxx;
  const double icpt = my - fit.slope * mx;
  fit.C = std::exp(icpt);
  fit.beta = std::min(1.0, std::exp(fit.slope));
  double ssr = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = ly[k] - (icpt + fit.slope * ns[k]);
    ssr += e * e;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return fit;
}

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu, const std::string& spec_hash,
                       std::uint64_t seed) {
  os << "# spec_hash=" << spec_hash << " seed=" << seed << "\n";
  const Eigen::Index d = mu.points.empty() ? 0 : mu.points.front().y.size();
  for (Eigen::Index k = 0; k < d; ++k) os << "y_" << k + 1 << ',';
  os << "regime,weight\n";
  for (std::size_t k = 0; k < mu.size(); ++k) {
    for (Eigen::Index j = 0; j < d; ++j) os << fmt(mu.points[k].y[j]) << ',';
    os << mu.points[k].i + 1 << ',' << fmt(mu.weights[k]) << '\n';
  }
}

}  // namespace pdmp
