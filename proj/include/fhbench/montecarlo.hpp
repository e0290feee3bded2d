#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fhbench/estimators.hpp"
#include "fhbench/rng.hpp"

namespace fhbench {

// Sampling-variance patterns: five group values, three areas per group.
enum class DPattern { A, B, C, D };
enum class QKind { Identity, DInverse };
// Case1: t(y) = W'y. Case2: t(y) = t0 with mu drawn unconditionally.
// Case2Star: t(y) = t0 with mu drawn conditioned on W'mu = t0.
enum class CaseKind { Case1, Case2, Case2Star };

struct SimConfig {
  int p = 2;
  double lambda = 1.0;
  int replications = 10000;
  DPattern pattern = DPattern::A;
  QKind q_kind = QKind::Identity;
  CaseKind kase = CaseKind::Case1;
  std::uint64_t seed = 0;
  // k = 15 * group_copies; copies > 1 tile the five-group pattern.
  int group_copies = 1;
  // Redraw X every replication instead of once per setting.
  bool redraw_design = false;
  std::optional<double> t0_override;

  int k() const { return 15 * group_copies; }
};

struct SimTruth {
  Eigen::VectorXd beta;
  double lambda = 1.0;
  Eigen::VectorXd mu;
  std::uint64_t seed = 0;
  std::uint32_t replication = 0;
};

struct RiskEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample sd / sqrt(replications)
  int replications = 0;
  std::string estimator;
};

enum class EstimatorTag { Direct, EB, CB, CM, UC1, UC2 };

Eigen::VectorXd d_pattern_vector(DPattern pattern, int group_copies = 1);

// k x p design with i.i.d. rows from N_p(0, 0.8 I + 0.2 J); full column rank
// enforced by redraw (bounded attempts).
Eigen::MatrixXd gen_design(std::uint64_t seed, int k, int p);

// Coefficients 1 + 4u with u ~ U(0,1).
Eigen::VectorXd gen_beta(std::uint64_t seed, int p);

// A fully materialized simulation setting: drawn X and beta, the benchmark
// weights W = D^{-1} 1, and both target variants sharing that W.
struct Setting {
  FayHerriotModel model;
  BenchmarkSpec spec_direct;  // W'mu_hat = W'y
  BenchmarkSpec spec_fixed;   // W'mu_hat = t0
  Eigen::VectorXd beta;
  Eigen::VectorXd t0;
};

Setting make_setting(const SimConfig& config);

// mu ~ N(X beta, lambda I), conditioned on W'mu = t0 for Case2Star (exact
// per-draw constraint).
SimTruth draw_mu(const Setting& setting, const SimConfig& config,
                 std::uint32_t replication);

Observation draw_y(const SimTruth& truth, const Setting& setting,
                   const SimConfig& config, std::uint32_t replication);

// Mean weighted loss over fresh (mu, y) pairs. Deterministic given seed and
// replication count; common random numbers across estimators by construction.
RiskEstimate unconditional_risk(EstimatorTag estimator, const SimConfig& config);

// y redrawn each replication with mu held fixed.
RiskEstimate conditional_risk(EstimatorTag estimator, const Eigen::VectorXd& mu_fixed,
                              const SimConfig& config);

// Max absolute residual of the per-draw loss decomposition
//   L(mu, constrain(mu_hat); Q) = (mu_hat-mu)'Q(I-P_W)(mu_hat-mu)
//     + (t(y)-W'mu)'(W'Q^{-1}W)^{-1}(t(y)-W'mu)
// over the requested number of draws; inner is Direct or EB.
double verify_decomposition(const SimConfig& config, int draws, EstimatorTag inner);

// Paired comparison of the benchmarked EB and benchmarked direct estimators
// against the second-order risk-difference approximation at the true lambda.
struct DeltaComparison {
  double delta_u_mean = 0.0;       // mean per-draw loss(CEB) - loss(CM)
  double delta_u_std_error = 0.0;  // stderr of the paired differences
  double delta_apr_value = 0.0;
  double gap_per_area = 0.0;       // |delta_u_mean - delta_apr_value| / k
  int replications = 0;
};
DeltaComparison delta_u_vs_apr(const SimConfig& config);

// Per-replication losses for the full estimator column set of one setting,
// sharing draws across columns. Columns 0..7:
//   y, EB, CB(case1), UC1, CB(case2), UC2(case2), CB(case2*), UC2(case2*).
struct SettingRisks {
  SimConfig config;
  double tr_qd = 0.0;  // exact unconditional risk of the direct estimator
  std::array<std::vector<double>, 8> losses;
};
inline constexpr std::array<const char*, 8> kRiskColumns = {
    "y", "eb", "cb_case1", "uc1", "cb_case2", "uc2_case2",
    "cb_case2star", "uc2_case2star"};

SettingRisks simulate_setting(const SimConfig& config);

struct RiskTableRow {
  QKind q_kind = QKind::Identity;
  DPattern pattern = DPattern::A;
  double tr_qd = 0.0;
  std::array<RiskEstimate, 8> cells;
};
struct RiskTable {
  std::uint64_t seed = 0;
  int replications = 0;
  std::vector<RiskTableRow> rows;
};

// All eight built-in settings (patterns a-d, Q identity and D-inverse).
RiskTable risk_table(std::uint64_t seed, int replications);

// Fixed-tree pairwise reduction; schedule-independent.
double pairwise_sum(const std::vector<double>& xs);
RiskEstimate summarize(const std::vector<double>& losses, std::string estimator);

}  // namespace fhbench
