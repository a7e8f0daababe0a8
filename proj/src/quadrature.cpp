#include "pdmp/quadrature.hpp"

#include <map>
#include <memory>
#include <mutex>

namespace pdmp {

namespace {

template <typename Make>
const QuadratureRule<double>& cached(std::map<int, std::unique_ptr<QuadratureRule<double>>>& cache,
                                     std::mutex& mu, int n, Make make) {
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<QuadratureRule<double>>(make(n));
  return *slot;
}

}  // namespace

const QuadratureRule<double>& laguerre_rule(int n) {
  static std::map<int, std::unique_ptr<QuadratureRule<double>>> cache;
  static std::mutex mu;
  return cached(cache, mu, n, [](int k) { return gauss_laguerre<double>(k); });
}

const QuadratureRule<double>& legendre_rule(int n) {
  static std::map<int, std::unique_ptr<QuadratureRule<double>>> cache;
  static std::mutex mu;
  return cached(cache, mu, n, [](int k) { return gauss_legendre<double>(k); });
}

TensorGrid box_grid(const Eigen::VectorXd& upper, int per_dim) {
  const int d = static_cast<int>(upper.size());
  const auto& base = legendre_rule(per_dim);
  long total = 1;
  for (int k = 0; k < d; ++k) total *= per_dim;
  TensorGrid g{Eigen::MatrixXd(d, total), Eigen::VectorXd(total)};
  std::vector<int> idx(d, 0);
  for (long col = 0; col < total; ++col) {
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      double half = upper[k] / 2.0;
      g.points(k, col) = half * (base.nodes[idx[k]] + 1.0);
      w *= half * base.weights[idx[k]];
    }
    g.weights[col] = w;
    for (int k = 0; k < d; ++k) {
      if (++idx[k] < per_dim) break;
      idx[k] = 0;
    }
  }
  return g;
}

}  // namespace pdmp
