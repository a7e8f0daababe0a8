#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pdmp/ergodic.hpp"

namespace pdmp {

enum class BurstKind { constant, truncated_exponential };
const char* to_string(BurstKind k);

// Truncated exponential bursts use the rate
//   beta(y) = beta_min + (beta_max - beta_min) |y| / (1 + |y|),
// so larger protein levels make small bursts more likely.
struct BurstParams {
  BurstKind kind = BurstKind::constant;
  double beta_min = 1.0;
  double beta_max = 1.0;
};

struct BurstDensity {
  std::string name;
  std::function<double(const Vec&, const Vec&)> p;  // (y, theta)
  double p_max = 0.0;
  double L_p = 0.0;      // L1-Lipschitz constant in y
  double delta_p = 1.0;  // overlap of the extreme-rate densities
};

// Density on prod [0, upper_k] with its constants; the normalisation is
// checked by quadrature at several rates.
BurstDensity default_burst_density(const BurstParams& params, const Vec& upper);

struct OperonModel {
  Vec rates;  // linear degradation D(y) = diag(rates) y, all positive
  // Optional nonlinear degradation; then alpha_bar is the user's
  // dissipativity certificate and is spot-checked.
  std::function<Vec(const Vec&)> degradation;
  double alpha_bar = 0.0;
  Vec burst_upper;  // Theta = prod [0, Delta_k]
  BurstParams burst;
  double jump_rate = 1.0;
  Perturbation perturbation{PerturbationKind::box, 0.0, 0.0};
  int dim() const { return static_cast<int>(burst_upper.size()); }
};

struct OperonBundle {
  ModelSpec spec;
  AssumptionInputs inputs;
  BurstDensity density;
  double alpha_bar = 0.0;
};

// Single-regime spec with w_theta(y) = y + theta, y* = 0, Y the nonnegative
// orthant, and inputs L = 1, alpha = -alpha_bar, Lcal = 0, L_w = 1.
OperonBundle build_operon_spec(const OperonModel& m, std::uint64_t seed = 0x6e6e);

// min over sampled pairs of <y1 - y2, D(y1) - D(y2)> / |y1 - y2|^2 in
// [0, radius]^d. A quarter of the pairs differ along one coordinate axis.
double verify_dissipativity(const std::function<Vec(const Vec&)>& field, int dim, int pairs,
                            double radius, std::uint64_t seed = 0xd155);

struct ContractionRow {
  double t = 0.0;
  double max_ratio = 0.0;
};
struct ContractionReport {
  std::vector<ContractionRow> rows;
  double max_ratio = 0.0;
  bool pass = false;  // max ratio <= 1 + 1e-6
};
// |S(t,y1) - S(t,y2)| e^{alpha_bar t} / |y1 - y2| over sampled pairs.
ContractionReport flow_contraction_check(const ModelSpec& spec, double alpha_bar, int pairs,
                                         const std::vector<double>& t_grid,
                                         std::uint64_t seed = 0xc0c0, double radius = 5.0);

struct DemoBudget {
  double burn_in = 100.0;
  std::size_t samples = 20000;
  double horizon = 20100.0;
  double slln_horizon = 10000.0;
  int slln_replicas = 8;
  std::size_t convergence_replicas = 2000;
  std::vector<std::size_t> checkpoints = {1, 2, 4, 8, 16, 32};
  double start_level = 5.0;
  int bins = 40;
};

// Invariant estimate with per-coordinate histograms, continuous-time SLLN
// for min(1, |y|), and convergence from 0 and from (start_level, ...).
std::vector<ExperimentResult> operon_demo(const OperonBundle& b, double c, std::uint64_t seed,
                                          const DemoBudget& budget = {});

}  // namespace pdmp
