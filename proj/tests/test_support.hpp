#pragma once

// Shared generators and independent oracles for the test suites. Oracles use
// plain dense formulas (explicit inverses) so they do not share code paths
// with the library implementations they check.

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "fhbench/model.hpp"

namespace testsup {

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int n, double lo = -2.0,
                                     double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = g(rng);
  return M;
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n, double ridge = 0.5) {
  const Eigen::MatrixXd A = random_matrix(rng, n, n);
  return A * A.transpose() + ridge * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, int n) {
  const Eigen::MatrixXd A = random_matrix(rng, n, n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ();
  // Fix signs so the distribution does not collapse.
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i)
    if (R(i, i) < 0) Q.col(i) *= -1.0;
  return Q;
}

inline fhbench::FayHerriotModel random_model(std::mt19937_64& rng, int k, int p,
                                             double dlo = 0.1, double dhi = 4.0) {
  fhbench::FayHerriotModel model;
  model.X = random_matrix(rng, k, p);
  model.d = random_vector(rng, k, dlo, dhi).cwiseAbs();
  for (int i = 0; i < k; ++i) model.d(i) = std::max(model.d(i), dlo);
  return model;
}

inline fhbench::BenchmarkSpec random_spec(std::mt19937_64& rng, int k, int m,
                                          bool random_q = true) {
  fhbench::BenchmarkSpec spec;
  spec.W = random_matrix(rng, k, m);
  spec.Q = random_q ? random_spd(rng, k) : Eigen::MatrixXd::Identity(k, k);
  return spec;
}

// P_W by the direct textbook formula with explicit inverses.
inline Eigen::MatrixXd projection_oracle(const Eigen::MatrixXd& Q,
                                         const Eigen::MatrixXd& W) {
  const Eigen::MatrixXd Qi = Q.inverse();
  return Qi * W * (W.transpose() * Qi * W).inverse() * W.transpose();
}

// y'A(lambda)y via explicit dense inverses.
inline double moment_oracle(const fhbench::FayHerriotModel& model,
                            const Eigen::VectorXd& y, double lambda) {
  Eigen::MatrixXd V = Eigen::MatrixXd(model.d.asDiagonal());
  V.diagonal().array() += lambda;
  const Eigen::MatrixXd Vi = V.inverse();
  const Eigen::MatrixXd A =
      Vi - Vi * model.X * (model.X.transpose() * Vi * model.X).inverse() *
               model.X.transpose() * Vi;
  return y.dot(A * y);
}

// Root of moment_oracle(lambda) = k - p on [0, inf): coarse grid to locate a
// sign change, then bisection on the oracle evaluator. Returns 0 when the
// value at zero is already at or below the target.
inline double grid_lambda_oracle(const fhbench::FayHerriotModel& model,
                                 const Eigen::VectorXd& y, int grid_points = 8192) {
  const double dof = model.k() - model.p();
  if (moment_oracle(model, y, 0.0) <= dof) return 0.0;
  double hi = model.d.maxCoeff();
  while (moment_oracle(model, y, hi) > dof) hi *= 2.0;
  double lo = 0.0;
  // Coarse scan for the bracketing cell.
  double prev = 0.0;
  for (int i = 1; i <= grid_points; ++i) {
    const double x = hi * i / grid_points;
    if (moment_oracle(model, y, x) <= dof) {
      lo = prev;
      hi = x;
      break;
    }
    prev = x;
  }
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (moment_oracle(model, y, mid) > dof)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline double rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / (1.0 + a.cwiseAbs().maxCoeff());
}

inline double rel_frob(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

}  // namespace testsup
