#include "fhbench/montecarlo.hpp"

#include <cmath>

#include "fhbench/conditions.hpp"

namespace fhbench {

namespace {

constexpr std::uint64_t kStreamDesign = 1;
constexpr std::uint64_t kStreamBeta = 2;
constexpr std::uint64_t kStreamDraws = 3;

// mu noise occupies components [0, k), sampling noise [k, 2k). The case does
// not enter the salt, so Case1/Case2/Case2Star share underlying draws
// (common random numbers across the table columns).
std::uint64_t setting_salt(const SimConfig& c) {
  return (static_cast<std::uint64_t>(c.group_copies) << 16) |
         (static_cast<std::uint64_t>(c.pattern) << 4) |
         static_cast<std::uint64_t>(c.q_kind);
}

std::uint64_t setting_seed(const SimConfig& c) {
  return mix_seed(c.seed, setting_salt(c));
}

const char* estimator_name(EstimatorTag tag) {
  switch (tag) {
    case EstimatorTag::Direct: return "y";
    case EstimatorTag::EB: return "eb";
    case EstimatorTag::CB: return "cb";
    case EstimatorTag::CM: return "cm";
    case EstimatorTag::UC1: return "uc1";
    case EstimatorTag::UC2: return "uc2";
  }
  return "?";
}

const BenchmarkSpec& spec_for_case(const Setting& s, CaseKind kase) {
  return kase == CaseKind::Case1 ? s.spec_direct : s.spec_fixed;
}

double pairwise_sum_range(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum_range(x, h) + pairwise_sum_range(x + h, n - h);
}

}  // namespace

double pairwise_sum(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : pairwise_sum_range(xs.data(), xs.size());
}

RiskEstimate summarize(const std::vector<double>& losses, std::string estimator) {
  RiskEstimate est;
  est.estimator = std::move(estimator);
  est.replications = static_cast<int>(losses.size());
  if (losses.empty()) return est;
  est.mean = pairwise_sum(losses) / est.replications;
  if (losses.size() > 1) {
    std::vector<double> sq(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
      const double c = losses[i] - est.mean;
      sq[i] = c * c;
    }
    const double var = pairwise_sum(sq) / (est.replications - 1);
    est.std_error = std::sqrt(var / est.replications);
  }
  return est;
}

Eigen::VectorXd d_pattern_vector(DPattern pattern, int group_copies) {
  static constexpr std::array<std::array<double, 5>, 4> kGroups = {{
      {0.5, 0.5, 0.4, 0.3, 0.3},
      {0.7, 0.6, 0.5, 0.4, 0.3},
      {2.0, 0.6, 0.5, 0.4, 0.2},
      {4.0, 0.6, 0.5, 0.4, 0.1},
  }};
  const auto& g = kGroups[static_cast<int>(pattern)];
  Eigen::VectorXd d(15 * group_copies);
  int idx = 0;
  for (int c = 0; c < group_copies; ++c)
    for (double v : g)
      for (int r = 0; r < 3; ++r) d(idx++) = v;
  return d;
}

Eigen::MatrixXd gen_design(std::uint64_t seed, int k, int p) {
  CounterRng rng(seed, kStreamDesign);
  Eigen::MatrixXd C = 0.8 * Eigen::MatrixXd::Identity(p, p) +
                      0.2 * Eigen::MatrixXd::Ones(p, p);
  const Eigen::MatrixXd L = C.llt().matrixL();
  Eigen::MatrixXd X(k, p);
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd raw(p);
      for (int j = 0; j < p; ++j)
        raw(j) = rng.normal(static_cast<std::uint32_t>(i),
                            static_cast<std::uint32_t>(attempt * p + j));
      X.row(i) = (L * raw).transpose();
    }
    if (numerical_rank(X) == p) return X;
  }
  throw NumericalError("gen_design: no full-rank draw within attempt limit");
}

Eigen::VectorXd gen_beta(std::uint64_t seed, int p) {
  CounterRng rng(seed, kStreamBeta);
  Eigen::VectorXd beta(p);
  for (int j = 0; j < p; ++j)
    beta(j) = 1.0 + 4.0 * rng.uniform(0, static_cast<std::uint32_t>(j));
  return beta;
}

Setting make_setting(const SimConfig& config) {
  const int k = config.k();
  const std::uint64_t sseed = setting_seed(config);

  Setting s;
  s.model.d = d_pattern_vector(config.pattern, config.group_copies);
  s.model.X = gen_design(sseed, k, config.p);
  s.beta = gen_beta(sseed, config.p);

  Eigen::MatrixXd W = s.model.d.cwiseInverse();
  W.resize(k, 1);
  Eigen::MatrixXd Q = config.q_kind == QKind::Identity
                          ? Eigen::MatrixXd::Identity(k, k)
                          : Eigen::MatrixXd(s.model.d.cwiseInverse().asDiagonal());

  s.t0.resize(1);
  s.t0(0) = config.t0_override
                ? *config.t0_override
                : 3.0 * (W.transpose() * s.model.X).sum();

  s.spec_direct = BenchmarkSpec{W, Q, TargetKind::WeightedDirect, {}};
  s.spec_fixed = BenchmarkSpec{W, Q, TargetKind::FixedTarget, s.t0};
  return s;
}

SimTruth draw_mu(const Setting& setting, const SimConfig& config,
                 std::uint32_t replication) {
  const int k = config.k();
  CounterRng rng(setting_seed(config), kStreamDraws);
  Eigen::VectorXd g(k);
  for (int i = 0; i < k; ++i) g(i) = rng.normal(replication, static_cast<std::uint32_t>(i));

  SimTruth truth;
  truth.beta = setting.beta;
  truth.lambda = config.lambda;
  truth.seed = config.seed;
  truth.replication = replication;

  const Eigen::VectorXd prior_mean = setting.model.X * setting.beta;
  const double sd = std::sqrt(config.lambda);
  if (config.kase != CaseKind::Case2Star) {
    truth.mu = prior_mean + sd * g;
    return truth;
  }
  // Gaussian conditioning on W'mu = t0: mean shift along W, noise projected
  // onto the orthogonal complement of col(W). The constraint holds per draw.
  const Eigen::MatrixXd& W = setting.spec_fixed.W;
  const Eigen::MatrixXd G = W.transpose() * W;
  const Eigen::LLT<Eigen::MatrixXd> llt(G);
  const Eigen::VectorXd shift =
      W * llt.solve(setting.t0 - W.transpose() * prior_mean);
  const Eigen::VectorXd projected = g - W * llt.solve(W.transpose() * g);
  truth.mu = prior_mean + shift + sd * projected;
  return truth;
}

Observation draw_y(const SimTruth& truth, const Setting& setting,
                   const SimConfig& config, std::uint32_t replication) {
  const int k = config.k();
  CounterRng rng(setting_seed(config), kStreamDraws);
  Observation obs;
  obs.y.resize(k);
  for (int i = 0; i < k; ++i)
    obs.y(i) = truth.mu(i) + std::sqrt(setting.model.d(i)) *
                                 rng.normal(replication, static_cast<std::uint32_t>(k + i));
  return obs;
}

namespace {

void check_case(EstimatorTag tag, CaseKind kase) {
  if (tag == EstimatorTag::UC1 && kase != CaseKind::Case1)
    throw std::invalid_argument("UC1 requires Case1 (weighted-direct target)");
  if (tag == EstimatorTag::UC2 && kase == CaseKind::Case1)
    throw std::invalid_argument("UC2 requires Case2 or Case2Star (fixed target)");
}

Eigen::VectorXd estimate_mu(EstimatorTag tag, const Setting& s, const SimConfig& c,
                            const Observation& obs, const CanonicalBasis* basis) {
  switch (tag) {
    case EstimatorTag::Direct:
      return obs.y;
    case EstimatorTag::EB:
      return eb_estimate(s.model, obs).mu_hat;
    case EstimatorTag::CM:
      return cm_estimate(s.model, spec_for_case(s, c.kase), obs).mu_hat;
    case EstimatorTag::CB:
      return ceb_estimate(s.model, spec_for_case(s, c.kase), obs).mu_hat;
    case EstimatorTag::UC1: {
      const CanonicalFrame frame = build_frame(s.model, s.spec_direct, obs, *basis);
      return uc1_estimate(s.model, s.spec_direct, obs, frame).mu_hat;
    }
    case EstimatorTag::UC2: {
      const CanonicalFrame frame = build_frame(s.model, s.spec_fixed, obs, *basis);
      return uc2_estimate(s.model, s.spec_fixed, obs, frame).mu_hat;
    }
  }
  throw std::invalid_argument("unknown estimator tag");
}

Setting setting_for_rep(const Setting& base, const SimConfig& config,
                        std::uint32_t rep) {
  if (!config.redraw_design) return base;
  Setting s = base;
  s.model.X = gen_design(mix_seed(setting_seed(config), 0x9E3779B9ull + rep),
                         config.k(), config.p);
  return s;
}

}  // namespace

RiskEstimate unconditional_risk(EstimatorTag estimator, const SimConfig& config) {
  check_case(estimator, config.kase);
  const Setting base = make_setting(config);
  CanonicalBasis basis;
  const bool needs_basis =
      estimator == EstimatorTag::UC1 || estimator == EstimatorTag::UC2;
  if (needs_basis) basis = build_basis(base.spec_direct);

  std::vector<double> losses(config.replications);
  for (int r = 0; r < config.replications; ++r) {
    const Setting s = setting_for_rep(base, config, r);
    const SimTruth truth = draw_mu(s, config, r);
    const Observation obs = draw_y(truth, s, config, r);
    const Eigen::VectorXd mu_hat = estimate_mu(estimator, s, config, obs, &basis);
    losses[r] = weighted_loss(mu_hat, truth.mu, s.spec_direct.Q);
  }
  return summarize(losses, estimator_name(estimator));
}

RiskEstimate conditional_risk(EstimatorTag estimator, const Eigen::VectorXd& mu_fixed,
                              const SimConfig& config) {
  check_case(estimator, config.kase);
  const Setting base = make_setting(config);
  if (mu_fixed.size() != config.k())
    throw std::invalid_argument("conditional_risk: mu has wrong length");
  CanonicalBasis basis;
  const bool needs_basis =
      estimator == EstimatorTag::UC1 || estimator == EstimatorTag::UC2;
  if (needs_basis) basis = build_basis(base.spec_direct);

  SimTruth truth;
  truth.beta = base.beta;
  truth.lambda = config.lambda;
  truth.mu = mu_fixed;
  truth.seed = config.seed;

  std::vector<double> losses(config.replications);
  for (int r = 0; r < config.replications; ++r) {
    truth.replication = r;
    const Observation obs = draw_y(truth, base, config, r);
    const Eigen::VectorXd mu_hat = estimate_mu(estimator, base, config, obs, &basis);
    losses[r] = weighted_loss(mu_hat, mu_fixed, base.spec_direct.Q);
  }
  return summarize(losses, estimator_name(estimator));
}

double verify_decomposition(const SimConfig& config, int draws, EstimatorTag inner) {
  if (inner != EstimatorTag::Direct && inner != EstimatorTag::EB)
    throw std::invalid_argument("verify_decomposition: inner must be Direct or EB");
  const Setting s = make_setting(config);
  const BenchmarkSpec& spec = spec_for_case(s, config.kase);
  const Eigen::MatrixXd QW = loss_reduced_QW(spec);  // equals Q(I - P_W)
  const Eigen::MatrixXd QinvW = spec.Q.llt().solve(spec.W);
  const Eigen::LLT<Eigen::MatrixXd> gram((spec.W.transpose() * QinvW).eval());

  double worst = 0.0;
  for (int r = 0; r < draws; ++r) {
    const SimTruth truth = draw_mu(s, config, r);
    const Observation obs = draw_y(truth, s, config, r);
    const Eigen::VectorXd inner_mu =
        inner == EstimatorTag::Direct ? obs.y : eb_estimate(s.model, obs).mu_hat;
    const EstimateResult constrained = constrain(inner_mu, s.model, spec, obs);

    const double lhs = weighted_loss(constrained.mu_hat, truth.mu, spec.Q);
    const Eigen::VectorXd diff = inner_mu - truth.mu;
    const Eigen::VectorXd tgap =
        target_value(spec, obs.y) - spec.W.transpose() * truth.mu;
    const double rhs = diff.dot(QW * diff) + tgap.dot(gram.solve(tgap));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

DeltaComparison delta_u_vs_apr(const SimConfig& config) {
  const Setting s = make_setting(config);
  const BenchmarkSpec& spec = spec_for_case(s, config.kase);

  std::vector<double> diffs(config.replications);
  for (int r = 0; r < config.replications; ++r) {
    const SimTruth truth = draw_mu(s, config, r);
    const Observation obs = draw_y(truth, s, config, r);
    const EstimateResult ceb = ceb_estimate(s.model, spec, obs);
    const EstimateResult cm = cm_estimate(s.model, spec, obs);
    diffs[r] = weighted_loss(ceb.mu_hat, truth.mu, spec.Q) -
               weighted_loss(cm.mu_hat, truth.mu, spec.Q);
  }
  const RiskEstimate est = summarize(diffs, "ceb_minus_cm");

  DeltaComparison cmp;
  cmp.delta_u_mean = est.mean;
  cmp.delta_u_std_error = est.std_error;
  cmp.delta_apr_value = delta_apr(s.model, spec, config.lambda, /*use_qw=*/true);
  cmp.gap_per_area = std::abs(cmp.delta_u_mean - cmp.delta_apr_value) / config.k();
  cmp.replications = config.replications;
  return cmp;
}

SettingRisks simulate_setting(const SimConfig& config) {
  const Setting s = make_setting(config);
  const CanonicalBasis basis = build_basis(s.spec_direct);

  SettingRisks out;
  out.config = config;
  out.tr_qd = (s.spec_direct.Q.diagonal().array() * s.model.d.array()).sum();
  for (auto& column : out.losses) column.resize(config.replications);

  SimConfig unc = config;
  unc.kase = CaseKind::Case1;
  SimConfig con = config;
  con.kase = CaseKind::Case2Star;

  for (int r = 0; r < config.replications; ++r) {
    const Setting sr = setting_for_rep(s, config, r);
    // Unconditional draw: y/EB plus both benchmark variants.
    const SimTruth truth_a = draw_mu(sr, unc, r);
    const Observation obs_a = draw_y(truth_a, sr, unc, r);
    const Eigen::MatrixXd& Q = sr.spec_direct.Q;

    const EstimateResult eb_a = eb_estimate(sr.model, obs_a);
    out.losses[0][r] = weighted_loss(obs_a.y, truth_a.mu, Q);
    out.losses[1][r] = weighted_loss(eb_a.mu_hat, truth_a.mu, Q);
    out.losses[2][r] = weighted_loss(
        constrain(eb_a.mu_hat, sr.model, sr.spec_direct, obs_a).mu_hat, truth_a.mu, Q);
    {
      const CanonicalFrame frame = build_frame(sr.model, sr.spec_direct, obs_a, basis);
      out.losses[3][r] = weighted_loss(
          uc1_estimate(sr.model, sr.spec_direct, obs_a, frame).mu_hat, truth_a.mu, Q);
    }
    out.losses[4][r] = weighted_loss(
        constrain(eb_a.mu_hat, sr.model, sr.spec_fixed, obs_a).mu_hat, truth_a.mu, Q);
    {
      const CanonicalFrame frame = build_frame(sr.model, sr.spec_fixed, obs_a, basis);
      out.losses[5][r] = weighted_loss(
          uc2_estimate(sr.model, sr.spec_fixed, obs_a, frame).mu_hat, truth_a.mu, Q);
    }

    // Same underlying noise, mu restricted to the benchmark hyperplane.
    const SimTruth truth_b = draw_mu(sr, con, r);
    const Observation obs_b = draw_y(truth_b, sr, con, r);
    const EstimateResult eb_b = eb_estimate(sr.model, obs_b);
    out.losses[6][r] = weighted_loss(
        constrain(eb_b.mu_hat, sr.model, sr.spec_fixed, obs_b).mu_hat, truth_b.mu, Q);
    {
      const CanonicalFrame frame = build_frame(sr.model, sr.spec_fixed, obs_b, basis);
      out.losses[7][r] = weighted_loss(
          uc2_estimate(sr.model, sr.spec_fixed, obs_b, frame).mu_hat, truth_b.mu, Q);
    }
  }
  return out;
}

RiskTable risk_table(std::uint64_t seed, int replications) {
  RiskTable table;
  table.seed = seed;
  table.replications = replications;
  for (QKind q : {QKind::Identity, QKind::DInverse}) {
    for (DPattern pattern : {DPattern::A, DPattern::B, DPattern::C, DPattern::D}) {
      SimConfig config;
      config.pattern = pattern;
      config.q_kind = q;
      config.seed = seed;
      config.replications = replications;
      const SettingRisks risks = simulate_setting(config);

      RiskTableRow row;
      row.q_kind = q;
      row.pattern = pattern;
      row.tr_qd = risks.tr_qd;
      for (std::size_t c = 0; c < risks.losses.size(); ++c)
        row.cells[c] = summarize(risks.losses[c], kRiskColumns[c]);
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace fhbench
