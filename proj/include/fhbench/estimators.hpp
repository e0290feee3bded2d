#pragma once

#include <optional>
#include <utility>

#include "fhbench/canonical.hpp"

namespace fhbench {

// Result of solving the moment equation y'A(lambda)y = dof.
// lambda_star is the untruncated root (may be negative when the equation
// crosses below zero); lambda_hat = max(lambda_star, 0).
struct VarianceFit {
  double lambda_hat = 0.0;
  double lambda_star = 0.0;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // moment value minus dof at the reported root
};

enum class Method { Direct, Bayes, EB, CM, CEB, UC1, UC2, Constrained };

struct EstimateResult {
  Eigen::VectorXd mu_hat;
  std::optional<VarianceFit> fit;
  std::optional<Eigen::VectorXd> beta_hat;
  // W'mu_hat - t(y); empty for methods computed without a benchmark spec.
  Eigen::VectorXd constraint_residual;
  Method method = Method::Direct;
};

// A(lambda) = V^{-1} - V^{-1} X (X'V^{-1}X)^{-1} X'V^{-1} with V = D + lambda I.
// Symmetric PSD, annihilates the columns of X, rank k-p.
Eigen::MatrixXd a_matrix(const FayHerriotModel& model, double lambda);

// Generalized least squares coefficients (X'V^{-1}X)^{-1} X'V^{-1} y.
Eigen::VectorXd gls_beta(const FayHerriotModel& model, const Observation& obs,
                         double lambda);

// Moment estimator of the prior variance: root of y'A(lambda)y = k - p,
// truncated at zero. Bracket doubling plus bisection; the map is monotone
// nonincreasing in lambda.
VarianceFit fh_lambda_solve(const FayHerriotModel& model, const Observation& obs);

// mu_hat = y - D A(lambda_hat) y, equivalently
// y - D (D + lambda_hat I)^{-1} (y - X beta_hat(lambda_hat)).
EstimateResult eb_estimate(const FayHerriotModel& model, const Observation& obs);

// Additive benchmark adjustment of an arbitrary estimate:
// mu_hat + Q^{-1}W (W'Q^{-1}W)^{-1} (t(y) - W'mu_hat). Satisfies the
// constraint exactly and leaves the (I - P_W) component unchanged.
EstimateResult constrain(const Eigen::VectorXd& muhat, const FayHerriotModel& model,
                         const BenchmarkSpec& spec, const Observation& obs);

// Benchmarked direct estimator: constrain(y).
EstimateResult cm_estimate(const FayHerriotModel& model, const BenchmarkSpec& spec,
                           const Observation& obs);

// Benchmarked empirical Bayes estimator:
// (I - P_W) mu_hat_EB + Q^{-1}W (W'Q^{-1}W)^{-1} t(y) = constrain(eb_estimate).
EstimateResult ceb_estimate(const FayHerriotModel& model, const BenchmarkSpec& spec,
                            const Observation& obs);

// Shared shrinkage engine for the subspace problems: given z ~ N(Xs b, Sigma
// + lambda I), solves z'As(lambda)z = dim(z) - p for lambda and returns
// xi_hat = z - Sigma (Sigma + lambda_hat I)^{-1} (z - Xs beta_s(lambda_hat)).
std::pair<Eigen::VectorXd, VarianceFit> subspace_eb(const Eigen::VectorXd& z,
                                                    const Eigen::MatrixXd& Xs,
                                                    const Eigen::MatrixXd& Sigma);

// Unconstrained empirical Bayes estimator that satisfies W'mu_hat = W'y by
// construction (WeightedDirect targets only):
// mu_hat = Q^{-1/2}H1'{xi3_hat(z3) + V12 V22^{-1} z2} + Q^{-1/2}H2' z2.
EstimateResult uc1_estimate(const FayHerriotModel& model, const BenchmarkSpec& spec,
                            const Observation& obs, const CanonicalFrame& frame);

// Unconstrained empirical Bayes estimator with W'mu_hat = t0 by construction
// (FixedTarget only): mu_hat = Q^{-1/2}H1' xi1_hat(z4) + Q^{-1/2}H2' xi0,
// built from (z4, X4) with the same subspace engine.
EstimateResult uc2_estimate(const FayHerriotModel& model, const BenchmarkSpec& spec,
                            const Observation& obs, const CanonicalFrame& frame);

// Bayes estimate under known hyperparameters:
// X beta + (D/lambda + I)^{-1}(y - X beta) = y - D (D + lambda I)^{-1}(y - X beta).
EstimateResult bayes_estimate(const FayHerriotModel& model, const Observation& obs,
                              const Eigen::VectorXd& beta, double lambda);

}  // namespace fhbench
