#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

namespace pdmp {

template <typename Scalar>
struct QuadratureRule {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;
};

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights are
// mu0 times the squared first eigenvector components.
template <typename Scalar>
QuadratureRule<Scalar> golub_welsch(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& diag,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& offdiag,
                                    Scalar mu0) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = diag.size();
  Mat J = Mat::Zero(n, n);
  J.diagonal() = diag;
  J.diagonal(1) = offdiag;
  J.diagonal(-1) = offdiag;
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  QuadratureRule<Scalar> rule;
  rule.nodes = es.eigenvalues();
  rule.weights = mu0 * es.eigenvectors().row(0).transpose().array().square().matrix();
  return rule;
}

// Weight e^{-u} on [0, inf).
template <typename Scalar = double>
QuadratureRule<Scalar> gauss_laguerre(int n) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a(n), b(n > 0 ? n - 1 : 0);
  for (int k = 0; k < n; ++k) a[k] = Scalar(2 * k + 1);
  for (int k = 0; k + 1 < n; ++k) b[k] = Scalar(k + 1);
  return golub_welsch<Scalar>(a, b, Scalar(1));
}

// Unit weight on [-1, 1].
template <typename Scalar = double>
QuadratureRule<Scalar> gauss_legendre(int n) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b(n > 0 ? n - 1 : 0);
  for (int k = 0; k + 1 < n; ++k) {
    Scalar m = Scalar(k + 1);
    b[k] = m / std::sqrt(Scalar(4) * m * m - Scalar(1));
  }
  return golub_welsch<Scalar>(a, b, Scalar(2));
}

// Legendre rule mapped to [lo, hi].
template <typename Scalar = double>
QuadratureRule<Scalar> gauss_legendre(int n, Scalar lo, Scalar hi) {
  auto r = gauss_legendre<Scalar>(n);
  Scalar half = (hi - lo) / Scalar(2);
  r.nodes = (r.nodes.array() * half + (lo + hi) / Scalar(2)).matrix();
  r.weights *= half;
  return r;
}

// Cached double-precision rules, safe to call from several threads.
const QuadratureRule<double>& laguerre_rule(int n);
const QuadratureRule<double>& legendre_rule(int n);

// Tensor Gauss-Legendre grid on the box prod [0, upper_k]: one point per
// column of `points`, weights sum to the box volume.
struct TensorGrid {
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;
};
TensorGrid box_grid(const Eigen::VectorXd& upper, int per_dim);

}  // namespace pdmp
