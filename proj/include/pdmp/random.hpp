#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace pdmp {

// splitmix64 finalizer; derive(master, k) gives the k-th child seed.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter);

// Replayable stream. Only raw engine output is used, every mapping to
// reals is done here so results do not depend on the standard library's
// distribution implementations.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t bits() { return engine_(); }

  // uniform on [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double exponential(double rate);
  std::size_t index(std::size_t n);
  // uniform on the unit ball of R^d, by rejection from the cube
  Eigen::VectorXd unit_ball(int d);

  Stream split(std::uint64_t k) const { return Stream(derive_seed(seed_, k)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace pdmp
