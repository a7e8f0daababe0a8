#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdmp/model.hpp"

namespace pdmp {

struct CoupledState {
  HybridState x1;
  HybridState x2;
};

enum class Branch { via_Q, residual };

// Randomness shared by both coordinates on the Q branch.
struct SharedDraws {
  double t = 0.0;
  Vec h;
  Vec theta;
  int j = 0;
};

struct QSample {
  CoupledState next;
  SharedDraws draws;
};

struct CoupledStepRecord {
  CoupledState next;
  Branch branch = Branch::via_Q;
  std::optional<SharedDraws> shared;
};

// Thinning sampler of the substochastic kernel: empty on rejection.
std::optional<QSample> sample_Q(const ModelSpec& spec, Stream& s, const HybridState& x1,
                                const HybridState& x2);

// Independent draws from the normalised residual of each marginal.
CoupledState sample_residual(const ModelSpec& spec, Stream& s, const HybridState& x1,
                             const HybridState& x2);

CoupledStepRecord coupled_step(const ModelSpec& spec, Stream& s, const CoupledState& cs);

// V(y, i) = |y - y*|
double lyapunov(const ModelSpec& spec, const HybridState& x);
bool in_F(const ModelSpec& spec, const AssumptionConstants& k, const CoupledState& cs);
bool in_K(const ModelSpec& spec, const AssumptionConstants& k, const CoupledState& cs);

struct KappaResult {
  long steps = 0;
  bool censored = false;
};

// First n >= 0 with the pair in K.
KappaResult coupling_time_kappa(const ModelSpec& spec, const AssumptionConstants& k, Stream& s,
                                const CoupledState& cs, long max_steps);

struct KappaTail {
  std::vector<double> zetas;
  std::vector<double> mean;    // E[zeta^-kappa]
  std::vector<double> se;
  std::vector<bool> stable;
  long censored = 0;
  double median_kappa = 0.0;
  double smallest_stable_zeta = 0.0;  // 0 when none is stable
};

KappaTail kappa_tail(const ModelSpec& spec, const AssumptionConstants& k, std::uint64_t seed,
                     const std::vector<CoupledState>& starts, long max_steps,
                     std::vector<double> zetas = {0.5, 0.7, 0.9, 0.95});

struct DriftRow {
  HybridState x;
  double pv = 0.0;
  double se = 0.0;
  double bound = 0.0;  // a V(x) + b
  bool pass = false;
};

// Monte Carlo P V(x) against a V(x) + b + 3 se.
std::vector<DriftRow> drift_check(const ModelSpec& spec, const AssumptionConstants& k,
                                  std::uint64_t seed, const std::vector<HybridState>& states,
                                  long draws);

struct PairRow {
  CoupledState pair;
  double rho = 0.0;
  double contraction = 0.0;  // E[rho_c(outputs) 1{Q accepts}]
  double contraction_se = 0.0;
  double mass = 0.0;  // Q acceptance probability
  double mass_se = 0.0;
  double small_set = 0.0;  // Q mass of {rho_c(outputs) <= q rho_c(pair)}
  double small_set_se = 0.0;
  bool support_ok = true;
  bool contraction_ok = false;
  bool small_set_ok = false;
  bool mass_ok = false;
};

struct PairStats {
  double contraction, contraction_se, mass, mass_se, small_set, small_set_se;
  bool support_ok;
};
PairStats q_pair_stats(const ModelSpec& spec, const AssumptionConstants& k, Stream& s,
                       const CoupledState& cs, long draws);

struct CouplingBudget {
  int pairs = 50;
  int states = 50;
  long draws = 10000;
};

struct CouplingReport {
  std::vector<ConditionVerdict> conditions;
  std::vector<DriftRow> drift_rows;
  std::vector<PairRow> pair_rows;
  bool all_pass() const;
};

// Pairs in F: half drawn uniformly from K, half from chain equilibrium.
std::vector<CoupledState> sample_F_pairs(const ModelSpec& spec, const AssumptionConstants& k,
                                         Stream& s, int n);

CouplingReport verify_B_conditions(const ModelSpec& spec, const AssumptionConstants& k,
                                   std::uint64_t seed, const CouplingBudget& budget = {});

std::string coupling_report_text(const CouplingReport& r);
void write_pair_csv(std::ostream& os, const CouplingReport& r, const std::string& spec_hash,
                    std::uint64_t seed);

}  // namespace pdmp
