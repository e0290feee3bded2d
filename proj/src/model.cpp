#include "fhbench/model.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace fhbench {

namespace {

void add(ValidationReport& report, const std::string& code, const std::string& message) {
  report.violations.push_back({code, message});
}

bool all_finite(const Eigen::MatrixXd& M) { return M.allFinite(); }

}  // namespace

std::string ValidationReport::summary() const {
  if (ok()) return "ok";
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].code << ": " << violations[i].message;
  }
  return os.str();
}

int numerical_rank(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cut = kRankTol * s(0);
  int r = 0;
  for (int i = 0; i < s.size(); ++i) {
    if (s(i) > cut) ++r;
  }
  return r;
}

ValidationReport validate(const FayHerriotModel& model) {
  ValidationReport report;
  const int k = model.k();
  const int p = model.p();
  if (k < 1) add(report, "k", "at least one area required");
  if (model.X.rows() != k)
    add(report, "X-rows", "X has " + std::to_string(model.X.rows()) +
                              " rows, expected k = " + std::to_string(k));
  if (p < 1 || p >= k)
    add(report, "p", "need 1 <= p < k, got p = " + std::to_string(p) +
                         ", k = " + std::to_string(k));
  if (!all_finite(model.X)) add(report, "X-finite", "X contains non-finite entries");
  if (!all_finite(model.d)) add(report, "d-finite", "d contains non-finite entries");
  for (int i = 0; i < k; ++i) {
    if (!(model.d(i) > 0.0)) {
      add(report, "d-positive", "nonpositive sampling variance at area " + std::to_string(i));
      break;
    }
  }
  if (report.ok() && numerical_rank(model.X) != p)
    add(report, "X-rank", "X is rank-deficient (numerical rank below p)");
  return report;
}

ValidationReport validate(const FayHerriotModel& model, const BenchmarkSpec& spec) {
  ValidationReport report = validate(model);
  const int k = model.k();
  const int m = spec.m();
  if (spec.W.rows() != k)
    add(report, "W-rows", "W has " + std::to_string(spec.W.rows()) +
                              " rows, expected k = " + std::to_string(k));
  if (m < 1 || m >= k)
    add(report, "m", "need 1 <= m < k, got m = " + std::to_string(m));
  if (!all_finite(spec.W)) add(report, "W-finite", "W contains non-finite entries");
  if (spec.W.rows() == k && m >= 1 && m < k && numerical_rank(spec.W) != m)
    add(report, "W-rank", "W rank-deficient");
  if (spec.Q.rows() != k || spec.Q.cols() != k) {
    add(report, "Q-shape", "Q must be k x k");
  } else {
    const double scale = spec.Q.cwiseAbs().maxCoeff();
    if (!all_finite(spec.Q)) {
      add(report, "Q-finite", "Q contains non-finite entries");
    } else if ((spec.Q - spec.Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + scale)) {
      add(report, "Q-symmetric", "Q is not symmetric");
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(spec.Q);
      if (llt.info() != Eigen::Success)
        add(report, "Q-posdef", "Q is not positive definite (Cholesky failed)");
    }
  }
  if (spec.target == TargetKind::FixedTarget && spec.t0.size() != m)
    add(report, "t0-size", "t0 has length " + std::to_string(spec.t0.size()) +
                               ", expected m = " + std::to_string(m));
  return report;
}

Eigen::VectorXd target_value(const BenchmarkSpec& spec, const Eigen::VectorXd& y) {
  if (spec.target == TargetKind::FixedTarget) return spec.t0;
  return spec.W.transpose() * y;
}

namespace {

// (W'Q^{-1}W)^{-1} applied to the columns of B.
Eigen::MatrixXd gram_solve(const BenchmarkSpec& spec, const Eigen::MatrixXd& B) {
  const Eigen::MatrixXd QinvW = spec.Q.llt().solve(spec.W);
  const Eigen::MatrixXd G = spec.W.transpose() * QinvW;
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success)
    throw NumericalError("W'Q^{-1}W is numerically singular");
  return llt.solve(B);
}

}  // namespace

Eigen::MatrixXd projection_PW(const BenchmarkSpec& spec) {
  const Eigen::MatrixXd QinvW = spec.Q.llt().solve(spec.W);
  return QinvW * gram_solve(spec, spec.W.transpose());
}

Eigen::MatrixXd loss_reduced_QW(const BenchmarkSpec& spec) {
  return spec.Q - spec.W * gram_solve(spec, spec.W.transpose());
}

double weighted_loss(const Eigen::VectorXd& muhat, const Eigen::VectorXd& mu,
                     const Eigen::MatrixXd& Q) {
  if (muhat.size() != mu.size() || Q.rows() != muhat.size() || Q.cols() != muhat.size())
    throw std::invalid_argument("weighted_loss: dimension mismatch");
  const Eigen::VectorXd diff = muhat - mu;
  return diff.dot(Q * diff);
}

}  // namespace fhbench
