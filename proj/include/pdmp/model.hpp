#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pdmp/errors.hpp"
#include "pdmp/random.hpp"

namespace pdmp {

using Vec = Eigen::VectorXd;

// A point (y, i) of the hybrid space. The regime index is zero-based in
// code; files and reports print i + 1.
struct HybridState {
  Vec y;
  int i = 0;
};

inline bool operator==(const HybridState& a, const HybridState& b) {
  return a.i == b.i && a.y.size() == b.y.size() && a.y == b.y;
}

template <typename DA, typename DB>
double rho_c(const Eigen::MatrixBase<DA>& y1, int i1, const Eigen::MatrixBase<DB>& y2, int i2,
             double c) {
  return (y1 - y2).norm() + (i1 != i2 ? c : 0.0);
}

double rho_c(const HybridState& x1, const HybridState& x2, double c);

// Product metric on pairs.
double rho_bar_c(const HybridState& x1, const HybridState& x2, const HybridState& z1,
                 const HybridState& z2, double c);

struct Flow {
  std::function<Vec(double, const Vec&)> analytic;  // S(t, y); optional
  std::function<Vec(const Vec&)> field;             // dy/dt when no closed form
};

enum class PerturbationKind { point, ball, box };

struct Perturbation {
  PerturbationKind kind = PerturbationKind::point;
  double eps = 0.0;
  double eps_star = 0.0;
};

Vec sample_perturbation(const Perturbation& p, int dim, Stream& s);
// sup |h| over the support
double perturbation_radius(const Perturbation& p, int dim);
const char* to_string(PerturbationKind k);

struct ModelSpec {
  std::string name;
  std::string fingerprint;  // canonical parameter text, hashed into outputs
  int dim = 1;
  int regimes = 1;
  std::vector<Flow> flows;
  std::function<Vec(const Vec&, const Vec&)> jump_map;  // (theta, y) -> w_theta(y)
  Vec theta_upper;                                      // Theta = prod [0, upper_k]
  std::function<double(const Vec&, const Vec&)> jump_density;  // (y, theta) -> p
  double p_max = 0.0;
  std::function<double(int, int, const Vec&)> switching;  // (i, j, y) -> pi_ij
  double jump_rate = 1.0;
  Perturbation perturbation;
  Vec reference_point;
  std::function<bool(const Vec&)> state_set;

  bool contains(const Vec& y) const { return !state_set || state_set(y); }
  double pi(int i, int j, const Vec& y) const {
    if (!switching) return i == j ? 1.0 : 0.0;
    return switching(i, j, y);
  }
  double theta_volume() const { return theta_upper.prod(); }
};

// Validity check of a spec on sampled states; fills p_max by grid search
// with 20% headroom when it is zero. Throws SpecError naming the failure.
void validate_spec(ModelSpec& spec, std::uint64_t seed, int samples = 50);

// States of Y within `radius` of y*, by rejection from the ball.
std::vector<Vec> sample_states(const ModelSpec& spec, Stream& s, double radius, int n);

// Constant bound on flow switching: Lcal(r) = l0 + l1 r.
struct Lcal {
  double l0 = 0.0;
  double l1 = 0.0;
  double operator()(double r) const { return l0 + l1 * r; }
  bool constant() const { return l1 == 0.0; }
};

struct AssumptionInputs {
  double L = 1.0;
  double alpha = 0.0;
  Lcal lcal;
  double L_w = 1.0;
  double L_p = 0.0;
  double L_pi = 0.0;
  double delta_p = 1.0;
  double delta_pi = 1.0;
};

struct AssumptionConstants {
  AssumptionInputs in;
  double lambda = 1.0;
  double a = 0.0;
  double b = 0.0;
  double b_se = 0.0;
  double R = 0.0;
  double M = 0.0;
  double c = 0.0;
  double T_lo = 0.0;
  double T_hi = 1.0;
  int grid_points = 0;
  int mc_draws = 0;

  double q() const { return a; }
  // mass bound of the small set: delta_pi delta_p int_T lam e^{-lam t} dt
  double delta() const;
  // slope of the coupling-mass defect bound
  double l() const;
};

struct DeriveOptions {
  int grid_points = 200;
  int mc_draws = 2000;
  std::uint64_t seed = 0x5eed;
};

AssumptionConstants derive_constants(const ModelSpec& spec, const AssumptionInputs& in,
                                     const DeriveOptions& opt = {});

// T interval: chosen so that e^{alpha t} <= lam / (lam - alpha) on T.
std::pair<double, double> small_set_interval(double lambda, double alpha);

std::string constants_report(const AssumptionConstants& k);

enum class Verdict { pass, fail, inconclusive };
const char* to_string(Verdict v);

struct ConditionVerdict {
  std::string name;
  Verdict verdict = Verdict::inconclusive;
  double worst = 0.0;  // worst observed ratio or margin
  double bound = 0.0;  // the constant it is compared with
  long samples = 0;
  std::string note;
};

struct AssumptionReport {
  std::vector<ConditionVerdict> conditions;
  bool all_pass() const;
};

struct AssumptionBudget {
  int pairs = 200;
  int mc_draws = 2000;
  int theta_nodes = 16;
  std::uint64_t seed = 0xa55;
};

AssumptionReport verify_assumptions(const ModelSpec& spec, const AssumptionConstants& k,
                                    const AssumptionBudget& budget = {});

std::string assumption_report_text(const AssumptionReport& r);

}  // namespace pdmp
