#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace fhbench {

// Singular values below kRankTol * sigma_max count as zero in rank checks.
inline constexpr double kRankTol = 1e-10;

// Thrown when a solve that should succeed under the validated preconditions
// breaks down (singular system, failed bracket, non-finite intermediate).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Area-level model y_i = mu_i + eps_i with eps_i ~ N(0, d_i) and known
// sampling variances d_i. X holds the per-area regressors.
struct FayHerriotModel {
  Eigen::MatrixXd X;  // k x p, full column rank
  Eigen::VectorXd d;  // k positive sampling variances

  int k() const { return static_cast<int>(d.size()); }
  int p() const { return static_cast<int>(X.cols()); }
};

struct Observation {
  Eigen::VectorXd y;  // k direct estimates
};

enum class TargetKind { WeightedDirect, FixedTarget };

// Benchmark constraint W' mu_hat = t(y) under weighted squared error loss
// with weight matrix Q. t(y) is W'y (WeightedDirect) or a constant t0.
struct BenchmarkSpec {
  Eigen::MatrixXd W;  // k x m, rank m < k
  Eigen::MatrixXd Q;  // k x k symmetric positive definite
  TargetKind target = TargetKind::WeightedDirect;
  Eigen::VectorXd t0;  // length m, used when target == FixedTarget

  int m() const { return static_cast<int>(W.cols()); }
};

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

ValidationReport validate(const FayHerriotModel& model);
ValidationReport validate(const FayHerriotModel& model, const BenchmarkSpec& spec);

int numerical_rank(const Eigen::MatrixXd& A);

// t(y) for the given spec.
Eigen::VectorXd target_value(const BenchmarkSpec& spec, const Eigen::VectorXd& y);

// P_W = Q^{-1} W (W'Q^{-1}W)^{-1} W'. Idempotent and Q-self-adjoint.
Eigen::MatrixXd projection_PW(const BenchmarkSpec& spec);

// Q_W = Q - W (W'Q^{-1}W)^{-1} W' = Q (I - P_W), symmetric PSD of rank k-m.
Eigen::MatrixXd loss_reduced_QW(const BenchmarkSpec& spec);

// (muhat - mu)' Q (muhat - mu)
double weighted_loss(const Eigen::VectorXd& muhat, const Eigen::VectorXd& mu,
                     const Eigen::MatrixXd& Q);

}  // namespace fhbench
