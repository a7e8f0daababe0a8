#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pdmp/model.hpp"

namespace pdmp {

// Weighted point cloud on the hybrid space; c is the metric weight of rho_c.
struct EmpiricalMeasure {
  std::vector<HybridState> points;
  std::vector<double> weights;
  double c = 1.0;

  static EmpiricalMeasure uniform(std::vector<HybridState> pts, double c);
  std::size_t size() const { return points.size(); }
  // weights >= 0 summing to 1 within 1e-12, one weight per point
  void validate() const;
};

struct FmResult {
  double distance = 0.0;
  // optimal test function on the combined support: mu1's points, then mu2's
  std::vector<double> witness;
  bool certified = true;  // false: sparse solve hit its round cap, distance is an upper bound
  int rounds = 0;
  long pivots = 0;
  long arcs = 0;
};

constexpr std::size_t kExactSupportCap = 500;

// Exact FM distance over all O(m^2) pairs; combined support <= 500 points.
double fm_distance_exact(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2);
FmResult fm_solve_dense(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2);

// Large supports: nearest-neighbour candidate arcs, then all-pairs dual
// certification that adds violated arcs until the potentials are feasible.
struct SparseOptions {
  int neighbours = 16;
  int max_rounds = 30;
};
FmResult fm_solve_sparse(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2,
                         const SparseOptions& opt = {});

// Dense for small supports, sparse-certified otherwise.
double fm_distance(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2);

struct SubsampleResult {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double sd = 0.0;
  std::vector<double> runs;
};
// Weight-proportional resampling to cap/2 points per measure, `runs` times.
// Both measures use the same index stream, so paired ensembles stay paired.
SubsampleResult fm_distance_subsampled(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2,
                                       std::uint64_t seed, std::size_t cap = kExactSupportCap,
                                       int runs = 5);

struct TestFunction {
  std::string name;
  std::function<double(const HybridState&)> f;
};

// Lower bound max |<f, mu1 - mu2>| over the dictionary. Every function is
// first checked for |f| <= 1 and |f(x) - f(z)| <= rho_c(x, z) on pairs from
// the combined support.
double fm_distance_dictionary(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2,
                              const std::vector<TestFunction>& dict, std::uint64_t seed = 7,
                              int check_pairs = 2000);

// Coordinate ramps, radial bumps at 16 anchors, and scaled regime indicators.
std::vector<TestFunction> default_dictionary(const EmpiricalMeasure& mu1,
                                             const EmpiricalMeasure& mu2, int regimes,
                                             std::uint64_t seed = 11);

// McShane extension of values on `support`, clipped to [-1, 1]; stays in the
// unit ball when the values do.
TestFunction lipschitz_extension(std::vector<HybridState> support, std::vector<double> values,
                                 double c);

EmpiricalMeasure marginalize_Y(const EmpiricalMeasure& mu);
double lyapunov_moment(const EmpiricalMeasure& mu, const Vec& y_star);
double integrate(const EmpiricalMeasure& mu, const std::function<double(const Vec&, int)>& f);

struct GeometricFit {
  double C = 0.0;
  double beta = 1.0;
  double slope = 0.0;  // fitted log beta before clipping to (0, 1]
  double r2 = 1.0;
  std::vector<bool> floored;
};
// Least squares of log d_n on n. Entries <= 0 are floored at `floor` and flagged.
GeometricFit fit_geometric_rate(const std::vector<double>& ns, const std::vector<double>& ds,
                                double floor = 1e-12);

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu, const std::string& spec_hash,
                       std::uint64_t seed);

}  // namespace pdmp
