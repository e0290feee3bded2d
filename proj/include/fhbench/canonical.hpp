#pragma once

#include <optional>

#include "fhbench/model.hpp"

namespace fhbench {

// Symmetric PSD square root / inverse square root via eigendecomposition.
// The symmetric root is used throughout so that the transform identities
// below hold exactly up to rounding.
Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& M);
Eigen::MatrixXd sym_inv_sqrt(const Eigen::MatrixXd& M);

// Orthogonal split H = (H1; H2): rows of H2 form an orthonormal basis of
// col(Q^{-1/2} W), rows of H1 one of its orthogonal complement, so that
//   H Q^{-1/2} W (W'Q^{-1}W)^{-1} W' Q^{-1/2} H' = blockdiag(0_{k-m}, I_m)
// and H1 Q^{-1/2} W = 0. The basis is unique only up to rotations inside the
// two subspaces; estimators built on it must not depend on the choice.
struct CanonicalBasis {
  Eigen::MatrixXd H1;          // (k-m) x k
  Eigen::MatrixXd H2;          // m x k
  Eigen::MatrixXd q_sqrt;      // Q^{1/2}
  Eigen::MatrixXd q_inv_sqrt;  // Q^{-1/2}
};

// Observation and covariance blocks in the split coordinates:
//   z_i = H_i Q^{1/2} y,   V_ij = H_i Q^{1/2} D Q^{1/2} H_j',
//   z3 = z1 - V12 V22^{-1} z2,   V11_2 = V11 - V12 V22^{-1} V21,
//   X3 = (H1 - V12 V22^{-1} H2) Q^{1/2} X,   X4 = H1 Q^{1/2} X.
// For a FixedTarget spec additionally
//   xi0 = (W' Q^{-1/2} H2')^{-1} t0,   z4 = z1 - V12 V22^{-1} (z2 - xi0).
struct CanonicalFrame {
  CanonicalBasis basis;
  Eigen::VectorXd z1;  // k-m
  Eigen::VectorXd z2;  // m
  Eigen::VectorXd z3;  // k-m
  Eigen::MatrixXd V11;    // (k-m) x (k-m)
  Eigen::MatrixXd V12;    // (k-m) x m
  Eigen::MatrixXd V22;    // m x m
  Eigen::MatrixXd V11_2;  // (k-m) x (k-m), Schur complement
  Eigen::MatrixXd X3;     // (k-m) x p
  Eigen::MatrixXd X4;     // (k-m) x p
  std::optional<Eigen::VectorXd> z4;   // FixedTarget only
  std::optional<Eigen::VectorXd> xi0;  // FixedTarget only
};

CanonicalBasis build_basis(const BenchmarkSpec& spec);

// Requires rank(X3) = rank(X4) = p, and for FixedTarget a nonsingular
// W'Q^{-1/2}H2'; throws NumericalError naming the failed assumption.
CanonicalFrame build_frame(const FayHerriotModel& model, const BenchmarkSpec& spec,
                           const Observation& obs, const CanonicalBasis& basis);

}  // namespace fhbench
