#include "fhbench/canonical.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace fhbench {

namespace {

Eigen::MatrixXd sym_power(const Eigen::MatrixXd& M, double exponent) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  if (eig.info() != Eigen::Success)
    throw NumericalError("symmetric eigendecomposition failed");
  Eigen::VectorXd w = eig.eigenvalues();
  for (int i = 0; i < w.size(); ++i) {
    if (w(i) <= 0.0)
      throw NumericalError("matrix is not positive definite in sym_power");
    w(i) = std::pow(w(i), exponent);
  }
  return eig.eigenvectors() * w.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& M) { return sym_power(M, 0.5); }
Eigen::MatrixXd sym_inv_sqrt(const Eigen::MatrixXd& M) { return sym_power(M, -0.5); }

CanonicalBasis build_basis(const BenchmarkSpec& spec) {
  CanonicalBasis basis;
  basis.q_sqrt = sym_sqrt(spec.Q);
  basis.q_inv_sqrt = sym_inv_sqrt(spec.Q);

  const int k = static_cast<int>(spec.W.rows());
  const int m = spec.m();
  // Left singular vectors of Q^{-1/2}W: the first m columns span the
  // constrained subspace, the rest its orthogonal complement.
  const Eigen::MatrixXd B = basis.q_inv_sqrt * spec.W;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeFullU);
  const auto& s = svd.singularValues();
  if (s(m - 1) <= kRankTol * s(0))
    throw NumericalError("Q^{-1/2}W is rank-deficient; cannot build basis");
  basis.H2 = svd.matrixU().leftCols(m).transpose();
  basis.H1 = svd.matrixU().rightCols(k - m).transpose();
  return basis;
}

CanonicalFrame build_frame(const FayHerriotModel& model, const BenchmarkSpec& spec,
                           const Observation& obs, const CanonicalBasis& basis) {
  const int k = model.k();
  const int p = model.p();
  if (obs.y.size() != k) throw std::invalid_argument("build_frame: y has wrong length");

  CanonicalFrame frame;
  frame.basis = basis;

  const Eigen::MatrixXd S1 = basis.H1 * basis.q_sqrt;  // (k-m) x k
  const Eigen::MatrixXd S2 = basis.H2 * basis.q_sqrt;  // m x k

  frame.z1 = S1 * obs.y;
  frame.z2 = S2 * obs.y;

  const Eigen::MatrixXd S1D = S1 * model.d.asDiagonal();
  frame.V11 = S1D * S1.transpose();
  frame.V12 = S1D * S2.transpose();
  frame.V22 = S2 * model.d.asDiagonal() * S2.transpose();

  Eigen::LLT<Eigen::MatrixXd> v22(frame.V22);
  if (v22.info() != Eigen::Success)
    throw NumericalError("V22 is not positive definite");
  const Eigen::MatrixXd V22inv_V21 = v22.solve(frame.V12.transpose());  // m x (k-m)

  frame.V11_2 = frame.V11 - frame.V12 * V22inv_V21;
  frame.z3 = frame.z1 - frame.V12 * v22.solve(frame.z2);

  frame.X3 = (basis.H1 - frame.V12 * v22.solve(basis.H2)) * basis.q_sqrt * model.X;
  frame.X4 = S1 * model.X;
  if (numerical_rank(frame.X3) != p)
    throw NumericalError("transformed regressor X3 = (H1 - V12 V22^{-1} H2) Q^{1/2} X is rank-deficient");
  if (numerical_rank(frame.X4) != p)
    throw NumericalError("transformed regressor X4 = H1 Q^{1/2} X is rank-deficient");

  if (spec.target == TargetKind::FixedTarget) {
    const Eigen::MatrixXd M2 = spec.W.transpose() * basis.q_inv_sqrt * basis.H2.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M2);
    if (!lu.isInvertible())
      throw NumericalError("W'Q^{-1/2}H2' is singular; fixed-target frame is undefined");
    frame.xi0 = lu.solve(spec.t0);
    frame.z4 = frame.z1 - frame.V12 * v22.solve(frame.z2 - *frame.xi0);
  }
  return frame;
}

}  // namespace fhbench
