#pragma once

#include <cstdint>
#include <vector>

namespace pdmp {

// Primal network simplex for uncapacitated min-cost flow on nodes 0..n-1
// plus a hub node n joined to every node in both directions at hub_cost.
// The all-to-hub starting tree is strongly feasible, so there is no phase I.
// Arcs may be added after a solve; the next solve warm-starts from the
// current tree.
class NetworkSimplex {
 public:
  NetworkSimplex(std::vector<std::int64_t> supply, double hub_cost);

  int add_arc(int from, int to, double cost);
  // Returns the number of pivots. Throws NumericalError past the cap.
  long solve();

  int nodes() const { return n_; }
  int hub() const { return n_; }
  long arcs() const { return static_cast<long>(src_.size()); }
  // Node potentials with the hub at 0: f_u = pi_hub - pi_u is dual feasible
  // and optimal, |f_u| <= hub_cost.
  double dual(int u) const { return pi_[n_] - pi_[u]; }
  // sum cost * flow in supply units
  double primal_cost() const;

 private:
  double reduced(long e) const { return cost_[e] + pi_[src_[e]] - pi_[tgt_[e]]; }
  long find_entering();
  void pivot(long in);
  void cut(int u);
  void link(int u, int p);
  void refresh_subtree(int root);

  int n_;
  std::vector<int> src_, tgt_;
  std::vector<double> cost_;
  std::vector<std::int64_t> flow_;
  std::vector<signed char> state_;  // 1 non-basic at zero, 0 in tree

  std::vector<int> parent_, pred_, depth_, first_child_, next_sib_, prev_sib_;
  std::vector<char> up_;  // tree arc pred_[u] points u -> parent
  std::vector<double> pi_;
  long next_arc_ = 0;
  long block_ = 0;
  std::vector<int> stack_, path_;
};

}  // namespace pdmp
