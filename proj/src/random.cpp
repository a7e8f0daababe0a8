#include "pdmp/random.hpp"

#include <cmath>

namespace pdmp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
  return splitmix64(master ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
}

double Stream::exponential(double rate) { return -std::log1p(-uniform()) / rate; }

std::size_t Stream::index(std::size_t n) {
  auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return k < n ? k : n - 1;
}

Eigen::VectorXd Stream::unit_ball(int d) {
  Eigen::VectorXd v(d);
  for (;;) {
    for (int k = 0; k < d; ++k) v[k] = 2.0 * uniform() - 1.0;
    if (v.squaredNorm() < 1.0) return v;
  }
}

}  // namespace pdmp
