#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pdmp/model.hpp"

namespace pdmp {

using StateFn = std::function<double(const Vec&, int)>;

// S_i(t, y). Closed form when the spec has one, otherwise fixed-step RK4
// with step min(0.01, t/16). Throws FlowDomainError if the result leaves Y.
Vec flow(const ModelSpec& spec, int i, double t, const Vec& y);
Vec rk4_flow(const std::function<Vec(const Vec&)>& field, double t, const Vec& y);

double sample_holding_time(Stream& s, double lambda);

// theta ~ p(y, .) by rejection against the uniform envelope p_max.
Vec sample_theta(const ModelSpec& spec, Stream& s, const Vec& y);

struct JumpMark {
  Vec theta;
  Vec h;
};
JumpMark sample_jump(const ModelSpec& spec, Stream& s, const Vec& y_pre);

// j ~ pi_i.(y); no draw when there is a single regime.
int sample_regime(const ModelSpec& spec, Stream& s, int i, const Vec& y);

struct StepRecord {
  HybridState next;
  double dt = 0.0;
  JumpMark mark;
};

StepRecord chain_step_record(const ModelSpec& spec, Stream& s, const HybridState& x);
HybridState chain_step(const ModelSpec& spec, Stream& s, const HybridState& x);

struct ChainTrajectory {
  std::vector<HybridState> states;  // (Y_k, xi_k), k = 0..n
  std::vector<double> jump_times;   // tau_k, tau_0 = 0
  std::vector<JumpMark> marks;      // marks[k-1] produced state k
  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
};

ChainTrajectory simulate_chain(const ModelSpec& spec, Stream& s, const HybridState& x0,
                               std::size_t n);

// Interpolated process. The chain is run past the horizon so that the
// last stored jump time exceeds it.
struct PdmpPath {
  ChainTrajectory chain;
  double horizon = 0.0;
};

PdmpPath simulate_pdmp(const ModelSpec& spec, Stream& s, const HybridState& x0, double horizon);
HybridState evaluate(const ModelSpec& spec, const PdmpPath& path, double t);
// N_t: number of jumps in (0, t]
std::size_t count_jumps(const PdmpPath& path, double t);

// One-step kernels: G moves along the current flow for an Exp(lambda)
// time, W applies a jump and a regime switch.
HybridState sample_G(const ModelSpec& spec, Stream& s, const HybridState& x);
HybridState sample_W(const ModelSpec& spec, Stream& s, const HybridState& x);

// Gf(x) = int_0^inf lam e^{-lam t} f(S_i(t,y), i) dt by Gauss-Laguerre in u = lam t.
double apply_G_quadrature(const ModelSpec& spec, const StateFn& f, const HybridState& x,
                          int nodes = 32);

// int_0^len f(S_i(s, y), i) ds by composite Simpson.
double segment_integral(const ModelSpec& spec, const Vec& y, int i, double len, const StateFn& f);

// (1/t) int_0^t f(path(s)) ds, segment by segment.
double time_average(const ModelSpec& spec, const PdmpPath& path, const StateFn& f, double t);

void write_trajectory_csv(std::ostream& os, const ChainTrajectory& traj,
                          const std::string& spec_hash, std::uint64_t seed);

// Shortest round-trip decimal text for a double.
std::string fmt(double v);

}  // namespace pdmp
