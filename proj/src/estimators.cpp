#include "fhbench/estimators.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace fhbench {

namespace {

constexpr double kLambdaTol = 1e-12;  // bisection width target
constexpr int kMaxDoublings = 60;
constexpr int kMaxBisect = 240;

// Shrinkage core for z ~ N(Xs b, diag(var) + lambda I). Dense problems are
// rotated into this form by eigendecomposition before use.
struct DiagonalShrinker {
  const Eigen::VectorXd& var;
  const Eigen::MatrixXd& Xs;
  const Eigen::VectorXd& z;

  Eigen::VectorXd beta(double lambda) const {
    const Eigen::ArrayXd vi = 1.0 / (var.array() + lambda);
    const Eigen::MatrixXd XtVi = Xs.transpose() * vi.matrix().asDiagonal();
    const Eigen::MatrixXd G = XtVi * Xs;
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success)
      throw NumericalError("X'V^{-1}X is numerically singular");
    return llt.solve(XtVi * z);
  }

  // z'A(lambda)z, evaluated as the GLS residual quadratic form.
  double moment(double lambda) const {
    const Eigen::ArrayXd resid = (z - Xs * beta(lambda)).array();
    return (resid.square() / (var.array() + lambda)).sum();
  }

  // z - diag(var) (diag(var) + lambda I)^{-1} (z - Xs beta(lambda))
  Eigen::VectorXd shrink(double lambda) const {
    const Eigen::ArrayXd w = var.array() / (var.array() + lambda);
    return (z.array() - w * (z - Xs * beta(lambda)).array()).matrix();
  }
};

// Root of the monotone nonincreasing map lambda -> z'A(lambda)z = dof,
// truncated at zero. When the value at zero is already below dof, the
// negative root is still located (inside (-min var, 0)) and reported as
// lambda_star; lambda_hat is always max(lambda_star, 0).
VarianceFit solve_moment_diag(const DiagonalShrinker& s, double dof) {
  VarianceFit fit;
  int iters = 0;
  const double f0 = s.moment(0.0);
  ++iters;
  if (!std::isfinite(f0))
    throw NumericalError("moment equation not finite at lambda = 0");

  if (f0 <= dof) {
    fit.lambda_hat = 0.0;
    fit.converged = true;
    if (f0 == dof) {
      fit.lambda_star = 0.0;
      fit.residual = 0.0;
      fit.iterations = iters;
      return fit;
    }
    double lo = -s.var.minCoeff() * (1.0 - 1e-9);
    double hi = 0.0;
    double flo = s.moment(lo);
    ++iters;
    if (!(flo > dof)) {
      // No crossing: residual vector is (numerically) in the column space.
      fit.lambda_star = 0.0;
      fit.residual = f0 - dof;
      fit.iterations = iters;
      return fit;
    }
    while (hi - lo > kLambdaTol && iters < kMaxBisect) {
      const double mid = 0.5 * (lo + hi);
      const double fm = s.moment(mid);
      ++iters;
      if (fm > dof)
        lo = mid;
      else
        hi = mid;
    }
    fit.lambda_star = 0.5 * (lo + hi);
    fit.residual = s.moment(fit.lambda_star) - dof;
    fit.iterations = iters;
    return fit;
  }

  // Positive root: double the upper end until the moment drops below dof.
  double lo = 0.0;
  double hi = std::max(s.var.maxCoeff(), 1.0);
  double fhi = s.moment(hi);
  ++iters;
  int doublings = 0;
  while (fhi > dof && doublings < kMaxDoublings) {
    lo = hi;
    hi *= 2.0;
    fhi = s.moment(hi);
    ++iters;
    ++doublings;
  }
  if (fhi > dof) {
    fit.converged = false;
    fit.lambda_star = hi;
    fit.lambda_hat = hi;
    fit.residual = fhi - dof;
    fit.iterations = iters;
    return fit;
  }
  while (hi - lo > kLambdaTol && iters < kMaxBisect) {
    const double mid = 0.5 * (lo + hi);
    const double fm = s.moment(mid);
    ++iters;
    if (fm > dof)
      lo = mid;
    else
      hi = mid;
  }
  fit.lambda_star = 0.5 * (lo + hi);
  fit.lambda_hat = fit.lambda_star;
  fit.converged = true;
  fit.residual = s.moment(fit.lambda_star) - dof;
  fit.iterations = iters;
  return fit;
}

Eigen::VectorXd dense_gls(const Eigen::VectorXd& z, const Eigen::MatrixXd& Xs,
                          const Eigen::MatrixXd& Sigma, double lambda) {
  Eigen::MatrixXd Vs = Sigma;
  Vs.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(Vs);
  if (llt.info() != Eigen::Success)
    throw NumericalError("subspace covariance is not positive definite");
  const Eigen::MatrixXd ViX = llt.solve(Xs);
  const Eigen::MatrixXd G = Xs.transpose() * ViX;
  Eigen::LLT<Eigen::MatrixXd> gl(G);
  if (gl.info() != Eigen::Success)
    throw NumericalError("subspace GLS normal matrix is singular");
  return gl.solve(ViX.transpose() * z);
}

}  // namespace

Eigen::MatrixXd a_matrix(const FayHerriotModel& model, double lambda) {
  const Eigen::ArrayXd vi = 1.0 / (model.d.array() + lambda);
  const Eigen::MatrixXd B = vi.matrix().asDiagonal() * model.X;  // V^{-1} X
  const Eigen::MatrixXd G = model.X.transpose() * B;
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success)
    throw NumericalError("X'V^{-1}X is numerically singular in a_matrix");
  Eigen::MatrixXd A = Eigen::MatrixXd(vi.matrix().asDiagonal());
  A.noalias() -= B * llt.solve(B.transpose());
  return A;
}

Eigen::VectorXd gls_beta(const FayHerriotModel& model, const Observation& obs,
                         double lambda) {
  DiagonalShrinker s{model.d, model.X, obs.y};
  return s.beta(lambda);
}

VarianceFit fh_lambda_solve(const FayHerriotModel& model, const Observation& obs) {
  if (model.k() <= model.p())
    throw std::invalid_argument("fh_lambda_solve requires k > p");
  if (!obs.y.allFinite())
    throw std::invalid_argument("fh_lambda_solve: y contains non-finite entries");
  DiagonalShrinker s{model.d, model.X, obs.y};
  return solve_moment_diag(s, static_cast<double>(model.k() - model.p()));
}

EstimateResult eb_estimate(const FayHerriotModel& model, const Observation& obs) {
  const VarianceFit fit = fh_lambda_solve(model, obs);
  if (!fit.converged)
    throw NumericalError("moment equation solver failed to bracket a root");
  DiagonalShrinker s{model.d, model.X, obs.y};
  EstimateResult result;
  result.mu_hat = s.shrink(fit.lambda_hat);
  result.beta_hat = s.beta(fit.lambda_hat);
  result.fit = fit;
  result.method = Method::EB;
  return result;
}

EstimateResult constrain(const Eigen::VectorXd& muhat, const FayHerriotModel& model,
                         const BenchmarkSpec& spec, const Observation& obs) {
  if (muhat.size() != model.k())
    throw std::invalid_argument("constrain: estimate has wrong length");
  const Eigen::VectorXd t = target_value(spec, obs.y);
  const Eigen::MatrixXd QinvW = spec.Q.llt().solve(spec.W);
  const Eigen::MatrixXd G = spec.W.transpose() * QinvW;
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success)
    throw NumericalError("W'Q^{-1}W is numerically singular");
  EstimateResult result;
  result.mu_hat = muhat + QinvW * llt.solve(t - spec.W.transpose() * muhat);
  result.constraint_residual = spec.W.transpose() * result.mu_hat - t;
  result.method = Method::Constrained;
  return result;
}

EstimateResult cm_estimate(const FayHerriotModel& model, const BenchmarkSpec& spec,
                           const Observation& obs) {
  EstimateResult result = constrain(obs.y, model, spec, obs);
  result.method = Method::CM;
  return result;
}

EstimateResult ceb_estimate(const FayHerriotModel& model, const BenchmarkSpec& spec,
                            const Observation& obs) {
  const EstimateResult eb = eb_estimate(model, obs);
  EstimateResult result = constrain(eb.mu_hat, model, spec, obs);
  result.fit = eb.fit;
  result.beta_hat = eb.beta_hat;
  result.method = Method::CEB;
  return result;
}

std::pair<Eigen::VectorXd, VarianceFit> subspace_eb(const Eigen::VectorXd& z,
                                                    const Eigen::MatrixXd& Xs,
                                                    const Eigen::MatrixXd& Sigma) {
  const int n = static_cast<int>(z.size());
  const int p = static_cast<int>(Xs.cols());
  if (Xs.rows() != n || Sigma.rows() != n || Sigma.cols() != n)
    throw std::invalid_argument("subspace_eb: dimension mismatch");
  if (n <= p) throw std::invalid_argument("subspace_eb requires dim(z) > p");

  // Rotate to diagonal covariance; the moment equation and shrinkage are
  // rotation-equivariant.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Sigma);
  if (eig.info() != Eigen::Success)
    throw NumericalError("eigendecomposition of subspace covariance failed");
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw NumericalError("subspace covariance is not positive definite");
  const Eigen::MatrixXd& U = eig.eigenvectors();
  const Eigen::VectorXd var = eig.eigenvalues();
  const Eigen::VectorXd zt = U.transpose() * z;
  const Eigen::MatrixXd Xt = U.transpose() * Xs;

  DiagonalShrinker s{var, Xt, zt};
  const VarianceFit fit = solve_moment_diag(s, static_cast<double>(n - p));
  if (!fit.converged)
    throw NumericalError("subspace moment equation failed to bracket a root");
  return {U * s.shrink(fit.lambda_hat), fit};
}

EstimateResult uc1_estimate(const FayHerriotModel& model, const BenchmarkSpec& spec,
                            const Observation& obs, const CanonicalFrame& frame) {
  if (spec.target != TargetKind::WeightedDirect)
    throw std::invalid_argument("uc1_estimate requires a weighted-direct target");
  if (obs.y.size() != model.k())
    throw std::invalid_argument("uc1_estimate: y has wrong length");
  auto [xi3, fit] = subspace_eb(frame.z3, frame.X3, frame.V11_2);

  const Eigen::VectorXd h = frame.V12 * frame.V22.llt().solve(frame.z2);
  const CanonicalBasis& b = frame.basis;
  EstimateResult result;
  result.mu_hat = b.q_inv_sqrt * (b.H1.transpose() * (xi3 + h) + b.H2.transpose() * frame.z2);
  result.fit = fit;
  result.beta_hat = dense_gls(frame.z3, frame.X3, frame.V11_2, fit.lambda_hat);
  result.constraint_residual =
      spec.W.transpose() * result.mu_hat - target_value(spec, obs.y);
  result.method = Method::UC1;
  return result;
}

EstimateResult uc2_estimate(const FayHerriotModel& model, const BenchmarkSpec& spec,
                            const Observation& obs, const CanonicalFrame& frame) {
  if (spec.target != TargetKind::FixedTarget)
    throw std::invalid_argument("uc2_estimate requires a fixed target");
  if (obs.y.size() != model.k())
    throw std::invalid_argument("uc2_estimate: y has wrong length");
  if (!frame.z4 || !frame.xi0)
    throw std::invalid_argument("uc2_estimate: frame was built without a fixed target");
  auto [xi1, fit] = subspace_eb(*frame.z4, frame.X4, frame.V11_2);

  const CanonicalBasis& b = frame.basis;
  EstimateResult result;
  result.mu_hat = b.q_inv_sqrt * (b.H1.transpose() * xi1 + b.H2.transpose() * (*frame.xi0));
  result.fit = fit;
  result.beta_hat = dense_gls(*frame.z4, frame.X4, frame.V11_2, fit.lambda_hat);
  result.constraint_residual = spec.W.transpose() * result.mu_hat - spec.t0;
  result.method = Method::UC2;
  return result;
}

EstimateResult bayes_estimate(const FayHerriotModel& model, const Observation& obs,
                              const Eigen::VectorXd& beta, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("bayes_estimate requires lambda > 0");
  if (beta.size() != model.p())
    throw std::invalid_argument("bayes_estimate: beta has wrong length");
  const Eigen::ArrayXd w = model.d.array() / (model.d.array() + lambda);
  EstimateResult result;
  result.mu_hat = (obs.y.array() - w * (obs.y - model.X * beta).array()).matrix();
  result.beta_hat = beta;
  result.method = Method::Bayes;
  return result;
}

}  // namespace fhbench
