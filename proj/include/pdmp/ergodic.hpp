#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pdmp/measure.hpp"
#include "pdmp/samplers.hpp"

namespace pdmp {

struct ScalarOutcome {
  std::string name;
  double value = 0.0;
  double se = 0.0;  // 0 when exact
};

struct SeriesOutcome {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct VerdictOutcome {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double bound = 0.0;
  std::string note;
};

struct ExperimentResult {
  std::string name;
  std::map<std::string, std::string> digest;  // spec hash, seeds, budgets
  std::vector<ScalarOutcome> scalars;
  std::vector<SeriesOutcome> series;
  std::vector<VerdictOutcome> verdicts;

  bool all_pass() const;
  double scalar(const std::string& key) const;
  const VerdictOutcome& verdict(const std::string& key) const;
  void add_scalar(std::string key, double value, double se = 0.0);
  void add_verdict(std::string key, bool pass, double value, double bound, std::string note = "");
  std::string to_json() const;
  // <stem>.json plus <stem>_<series>.csv; returns the paths written
  std::vector<std::filesystem::path> write(const std::filesystem::path& dir,
                                           const std::string& stem) const;
};

// Occupation measure of X_{burn_in + thin k}, k = 1..n, uniform weights.
EmpiricalMeasure estimate_invariant_chain(const ModelSpec& spec, Stream& s, const HybridState& x0,
                                          std::size_t burn_in, std::size_t n, std::size_t thin,
                                          double c);

// Path of one long run evaluated at the given increasing times.
EmpiricalMeasure estimate_invariant_pdmp(const ModelSpec& spec, Stream& s, const HybridState& x0,
                                         double horizon, const std::vector<double>& sample_times,
                                         double c);

std::vector<double> equally_spaced_times(double burn_in, double horizon, std::size_t n);
// Arrival times of an independent Poisson clock with the same mean spacing.
std::vector<double> exponential_times(Stream& s, double burn_in, double horizon, std::size_t n);

// Two-sample noise floor: FM distance between the two halves of one sample.
double split_noise_floor(const EmpiricalMeasure& mu, std::uint64_t seed, std::size_t cap);

struct FmBudget {
  std::size_t cap = 20000;  // combined support per FM solve
  int runs = 3;
};

// d_FM(mu G, nu) and the companion d_FM(nu W, mu), each against `tol`.
ExperimentResult check_relation_G(const ModelSpec& spec, Stream& s, const EmpiricalMeasure& mu_star,
                                  const EmpiricalMeasure& nu_star, int per_point_draws, double tol,
                                  const FmBudget& fm = {});

// n draws of chain_step(x) against n draws of sample_W(sample_G(x)).
ExperimentResult check_P_equals_GW(const ModelSpec& spec, Stream& s, const HybridState& x,
                                   std::size_t n, double c, double tol = 0.03);

// Bounded Lipschitz observable with its constants.
struct Observable {
  std::string name;
  StateFn f;
  double sup = 1.0;
  double lipschitz = 1.0;
};
Observable min_one_norm();  // f(y, i) = min(1, |y|)
Observable constant_one();

struct SllnOptions {
  int replicas = 32;
  double tol = 0.02;
  double slope_lo = -0.75;
  double slope_hi = -0.25;
};

// Running averages of f along `replicas` independent chains. The final gap
// is the largest over replicas; the slope is fitted to the RMS gap.
ExperimentResult slln_chain(const ModelSpec& spec, std::uint64_t seed, const Observable& f,
                            const HybridState& x0, const std::vector<std::size_t>& checkpoints,
                            double reference, const SllnOptions& opt = {});

// Continuous-time analogue with time averages. Requires a constant Lcal.
ExperimentResult slln_pdmp(const ModelSpec& spec, const AssumptionInputs& in, std::uint64_t seed,
                           const Observable& f, const HybridState& x0,
                           const std::vector<double>& checkpoints, double reference,
                           const SllnOptions& opt = {});

// (1/t) int_0^t f - (1/N_t) sum_{k < N_t} Gf(Y_k, xi_k)
double cd_conv_gap(const ModelSpec& spec, const PdmpPath& path, const StateFn& f, double t);

// Increments int_{tau_k}^{tau_{k+1}} f - Gf(Y_k, xi_k) / lambda over the
// first n segments of the path.
ExperimentResult martingale_diagnostics(const ModelSpec& spec, const PdmpPath& path,
                                        const Observable& f, std::size_t n);

struct ShortTimeOptions {
  int s_nodes = 32;
  int theta_nodes = 16;
  int h_draws = 32;
  int seeds = 5;
  bool unit_observable = false;  // f == 1: also compare two-jump mass with its closed form
};

// Expansion e^{-lam t} f(S(t,y)) + lam e^{-lam t} int_0^t Psi_1 ds.
double short_time_expansion(const ModelSpec& spec, const StateFn& f, const HybridState& x, double t,
                            const ShortTimeOptions& opt, std::uint64_t h_seed);
// P^t f(x) stratified on the jump count, `draws` per stratum.
struct StratifiedEstimate {
  double value = 0.0;
  double se = 0.0;
};
StratifiedEstimate stratified_pt(const ModelSpec& spec, Stream& s, const StateFn& f,
                                 const HybridState& x, double t, std::size_t draws);

ExperimentResult short_time_check(const ModelSpec& spec, std::uint64_t seed, const Observable& f,
                                  const HybridState& x, const std::vector<double>& t_grid,
                                  std::size_t draws, const ShortTimeOptions& opt = {});

struct ConvergenceOptions {
  std::vector<std::size_t> checkpoints = {1, 2, 4, 8, 16, 32};
  std::size_t replicas = 10000;
  double r2_min = 0.9;
  // Replica k of both ensembles shares one stream, so the two clouds are
  // driven by common random numbers.
  bool common_numbers = true;
};

ExperimentResult convergence_experiment(const ModelSpec& spec, std::uint64_t seed, double c,
                                        const EmpiricalMeasure& mu0_a,
                                        const EmpiricalMeasure& mu0_b,
                                        const ConvergenceOptions& opt = {});

}  // namespace pdmp
