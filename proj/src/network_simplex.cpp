#include "pdmp/network_simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pdmp/errors.hpp"

namespace pdmp {

namespace {
constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
// Potentials are sums of O(depth) costs of order one; anything above this
// is treated as a genuinely negative reduced cost.
constexpr double kEps = 1e-11;
}  // namespace

NetworkSimplex::NetworkSimplex(std::vector<std::int64_t> supply, double hub_cost)
    : n_(static_cast<int>(supply.size())) {
  std::int64_t total = 0;
  for (auto b : supply) total += b;
  if (total != 0) throw NumericalError("network simplex: supplies do not balance");
  const int all = n_ + 1;
  parent_.assign(all, -1);
  pred_.assign(all, -1);
  depth_.assign(all, 0);
  first_child_.assign(all, -1);
  next_sib_.assign(all, -1);
  prev_sib_.assign(all, -1);
  up_.assign(all, 0);
  pi_.assign(all, 0.0);
  // hub arcs: u -> hub is arc 2u, hub -> u is arc 2u + 1
  for (int u = 0; u < n_; ++u) {
    const long out = add_arc(u, n_, hub_cost);
    const long in = add_arc(n_, u, hub_cost);
    if (supply[u] >= 0) {
      pred_[u] = static_cast<int>(out);
      up_[u] = 1;
      flow_[out] = supply[u];
      state_[out] = 0;
      pi_[u] = -hub_cost;
    } else {
      pred_[u] = static_cast<int>(in);
      up_[u] = 0;
      flow_[in] = -supply[u];
      state_[in] = 0;
      pi_[u] = hub_cost;
    }
    depth_[u] = 1;
    link(u, n_);
  }
}

int NetworkSimplex::add_arc(int from, int to, double cost) {
  src_.push_back(from);
  tgt_.push_back(to);
  cost_.push_back(cost);
  flow_.push_back(0);
  state_.push_back(1);
  return static_cast<int>(src_.size() - 1);
}

double NetworkSimplex::primal_cost() const {
  double s = 0.0;
  for (std::size_t e = 0; e < src_.size(); ++e)
    if (flow_[e] != 0) s += cost_[e] * static_cast<double>(flow_[e]);
  return s;
}

void NetworkSimplex::cut(int u) {
  const int p = parent_[u];
  if (prev_sib_[u] >= 0)
    next_sib_[prev_sib_[u]] = next_sib_[u];
  else
    first_child_[p] = next_sib_[u];
  if (next_sib_[u] >= 0) prev_sib_[next_sib_[u]] = prev_sib_[u];
  parent_[u] = -1;
  next_sib_[u] = prev_sib_[u] = -1;
}

void NetworkSimplex::link(int u, int p) {
  parent_[u] = p;
  prev_sib_[u] = -1;
  next_sib_[u] = first_child_[p];
  if (first_child_[p] >= 0) prev_sib_[first_child_[p]] = u;
  first_child_[p] = u;
}

// Potentials and depths below `root` from their tree arcs, recomputed rather
// than shifted so rounding does not accumulate across pivots.
void NetworkSimplex::refresh_subtree(int root) {
  stack_.clear();
  stack_.push_back(root);
  while (!stack_.empty()) {
    const int u = stack_.back();
    stack_.pop_back();
    const int p = parent_[u];
    const double c = cost_[pred_[u]];
    pi_[u] = up_[u] ? pi_[p] - c : pi_[p] + c;
    depth_[u] = depth_[p] + 1;
    for (int v = first_child_[u]; v >= 0; v = next_sib_[v]) stack_.push_back(v);
  }
}

long NetworkSimplex::find_entering() {
  const long m = arcs();
  long best = -1;
  double best_rc = -kEps;
  long seen = 0;
  long e = next_arc_ < m ? next_arc_ : 0;
  for (long k = 0; k < m; ++k, ++e) {
    if (e == m) e = 0;
    if (state_[e]) {
      const double rc = reduced(e);
      if (rc < best_rc) {
        best_rc = rc;
        best = e;
      }
    }
    if (++seen == block_) {
      if (best >= 0) {
        next_arc_ = e + 1;
        return best;
      }
      seen = 0;
    }
  }
  if (best >= 0) next_arc_ = (best + 1) % m;
  return best;
}

void NetworkSimplex::pivot(long in) {
  const int s = src_[in], t = tgt_[in];
  int a = s, b = t;
  while (a != b) {
    if (depth_[a] >= depth_[b])
      a = parent_[a];
    else
      b = parent_[b];
  }
  const int join = a;

  // Leaving arc: on ties prefer the second path, which keeps the tree
  // strongly feasible and rules out cycling.
  std::int64_t delta = kInf;
  int u_out = -1, side = 0;
  for (int u = s; u != join; u = parent_[u]) {
    const std::int64_t d = up_[u] ? flow_[pred_[u]] : kInf;
    if (d < delta) {
      delta = d;
      u_out = u;
      side = 1;
    }
  }
  for (int u = t; u != join; u = parent_[u]) {
    const std::int64_t d = up_[u] ? kInf : flow_[pred_[u]];
    if (d <= delta && d != kInf) {
      delta = d;
      u_out = u;
      side = 2;
    }
  }
  if (u_out < 0) throw NumericalError("network simplex: unbounded cycle (negative cost loop)");

  if (delta > 0) {
    flow_[in] += delta;
    for (int u = s; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? -delta : delta;
    for (int u = t; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? delta : -delta;
  }

  const int u_in = side == 1 ? s : t;
  const int v_in = side == 1 ? t : s;
  // Reverse the tree path u_in .. u_out and hang it below v_in.
  path_.clear();
  for (int u = u_in;; u = parent_[u]) {
    path_.push_back(u);
    if (u == u_out) break;
  }
  const long leaving = pred_[u_out];
  std::vector<int> old_pred(path_.size());
  std::vector<char> old_up(path_.size());
  for (std::size_t r = 0; r < path_.size(); ++r) {
    old_pred[r] = pred_[path_[r]];
    old_up[r] = up_[path_[r]];
  }
  for (auto it = path_.rbegin(); it != path_.rend(); ++it) cut(*it);
  link(path_[0], v_in);
  pred_[path_[0]] = static_cast<int>(in);
  up_[path_[0]] = src_[in] == path_[0];
  for (std::size_t r = 1; r < path_.size(); ++r) {
    link(path_[r], path_[r - 1]);
    pred_[path_[r]] = old_pred[r - 1];
    up_[path_[r]] = !old_up[r - 1];
  }
  state_[in] = 0;
  state_[leaving] = 1;
  refresh_subtree(path_[0]);
}

long NetworkSimplex::solve() {
  block_ = std::max<long>(10, static_cast<long>(std::sqrt(static_cast<double>(arcs()))));
  const long cap = 100 * arcs() + 1000000;
  long pivots = 0;
  for (long e; (e = find_entering()) >= 0;) {
    pivot(e);
    if (++pivots > cap)
      throw NumericalError("network simplex: pivot cap " + std::to_string(cap) + " exceeded (" +
                           std::to_string(n_) + " nodes, " + std::to_string(arcs()) + " arcs)");
  }
  return pivots;
}

}  // namespace pdmp
