#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fhbench/conditions.hpp"
#include "fhbench/estimators.hpp"
#include "fhbench/io.hpp"
#include "fhbench/montecarlo.hpp"

namespace {

using namespace fhbench;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumerical = 4;

const std::map<std::string, DPattern> kPatternNames = {
    {"a", DPattern::A}, {"b", DPattern::B}, {"c", DPattern::C}, {"d", DPattern::D}};
const std::map<std::string, QKind> kQNames = {
    {"identity", QKind::Identity}, {"d-inverse", QKind::DInverse}};
const std::map<std::string, CaseKind> kCaseNames = {
    {"1", CaseKind::Case1}, {"2", CaseKind::Case2}, {"2star", CaseKind::Case2Star}};

std::string pattern_name(DPattern p) {
  switch (p) {
    case DPattern::A: return "a";
    case DPattern::B: return "b";
    case DPattern::C: return "c";
    case DPattern::D: return "d";
  }
  return "?";
}

std::string q_name(QKind q) { return q == QKind::Identity ? "identity" : "d-inverse"; }

std::vector<DPattern> select_patterns(const std::string& sel) {
  if (sel == "all")
    return {DPattern::A, DPattern::B, DPattern::C, DPattern::D};
  return {kPatternNames.at(sel)};
}

std::vector<QKind> select_q(const std::string& sel) {
  if (sel == "all") return {QKind::Identity, QKind::DInverse};
  return {kQNames.at(sel)};
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file '" + path + "'", 0);
  return out;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOptions {
  std::string input, spec, out;
  std::string format = "csv";
};

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

nlohmann::json fit_json(const VarianceFit& fit) {
  return {{"lambda_hat", fit.lambda_hat},
          {"lambda_star", fit.lambda_star},
          {"converged", fit.converged},
          {"iterations", fit.iterations},
          {"moment_residual", fit.residual}};
}

int cmd_estimate(const EstimateOptions& opt) {
  EstimateInput input = read_estimate_csv(opt.input);
  const int k = input.model.k();
  if (!input.has_w) {
    // Default benchmark: precision-weighted total, W = D^{-1} 1.
    input.W = input.model.d.cwiseInverse();
    input.W.resize(k, 1);
  }
  const BenchmarkSpec spec = read_spec_json(opt.spec, input.model.d, input.W);

  const ValidationReport report = validate(input.model, spec);
  if (!report.ok()) {
    std::cerr << "validation failed: " << report.summary() << "\n";
    return kExitValidation;
  }
  if (!input.obs.y.allFinite()) {
    std::cerr << "validation failed: y contains non-finite entries\n";
    return kExitValidation;
  }

  const Eigen::VectorXd target = target_value(spec, input.obs.y);
  const EstimateResult eb = eb_estimate(input.model, input.obs);
  const EstimateResult cm = cm_estimate(input.model, spec, input.obs);
  const EstimateResult ceb = ceb_estimate(input.model, spec, input.obs);

  std::optional<EstimateResult> uc;
  std::string uc_method = "none";
  if (k - spec.m() > input.model.p()) {
    const CanonicalBasis basis = build_basis(spec);
    const CanonicalFrame frame = build_frame(input.model, spec, input.obs, basis);
    if (spec.target == TargetKind::WeightedDirect) {
      uc = uc1_estimate(input.model, spec, input.obs, frame);
      uc_method = "uc1";
    } else {
      uc = uc2_estimate(input.model, spec, input.obs, frame);
      uc_method = "uc2";
    }
  }

  nlohmann::json summary = {
      {"lambda", fit_json(*eb.fit)},
      {"beta_hat", vector_json(*eb.beta_hat)},
      {"target", vector_json(target)},
      {"uc_method", uc_method},
      {"constraint_residual",
       {{"cm", vector_json(cm.constraint_residual)},
        {"ceb", vector_json(ceb.constraint_residual)}}},
  };
  if (uc) {
    summary["uc_lambda"] = fit_json(*uc->fit);
    summary["uc_beta_hat"] = vector_json(*uc->beta_hat);
    summary["constraint_residual"]["uc"] = vector_json(uc->constraint_residual);
  }

  if (opt.format == "json") {
    nlohmann::json doc;
    doc["summary"] = summary;
    doc["areas"] = nlohmann::json::array();
    for (int i = 0; i < k; ++i) {
      nlohmann::json row = {{"area_id", input.area_ids[i]}, {"y", input.obs.y(i)},
                            {"d", input.model.d(i)},       {"direct", input.obs.y(i)},
                            {"eb", eb.mu_hat(i)},          {"cm", cm.mu_hat(i)},
                            {"ceb", ceb.mu_hat(i)}};
      if (uc)
        row["uc"] = uc->mu_hat(i);
      else
        row["uc"] = nullptr;
      doc["areas"].push_back(std::move(row));
    }
    auto out = open_output(opt.out);
    out << doc.dump(2) << "\n";
  } else {
    auto out = open_output(opt.out);
    out << "area_id,y,d,direct,eb,cm,ceb,uc\n";
    for (int i = 0; i < k; ++i) {
      out << input.area_ids[i] << ',' << format_double(input.obs.y(i)) << ','
          << format_double(input.model.d(i)) << ',' << format_double(input.obs.y(i))
          << ',' << format_double(eb.mu_hat(i)) << ',' << format_double(cm.mu_hat(i))
          << ',' << format_double(ceb.mu_hat(i)) << ','
          << (uc ? format_double(uc->mu_hat(i)) : std::string()) << "\n";
    }
    auto side = open_output(opt.out + ".summary.json");
    side << summary.dump(2) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// check

struct CheckOptions {
  std::string pattern = "all";
  std::string q = "all";
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "csv";
};

std::string verdict_mark(const ConditionVerdict& v) { return v.satisfied ? "+" : "-"; }

nlohmann::json verdict_json(const ConditionVerdict& v, const std::string& form,
                            const std::string& threshold) {
  nlohmann::json j = {{"name", v.name},       {"form", form},
                      {"threshold", threshold}, {"lhs", v.lhs},
                      {"rhs", v.rhs},         {"margin", v.margin()},
                      {"satisfied", v.satisfied}};
  if (v.lambda_at_min) j["lambda_at_min"] = *v.lambda_at_min;
  return j;
}

int cmd_check(const CheckOptions& opt) {
  struct Cell {
    std::string pattern, q, estimator, condition, form, threshold;
    ConditionVerdict verdict;
  };
  std::vector<Cell> cells;
  const LambdaGrid grid = LambdaGrid::standard();

  const char* est_names[] = {"eb", "cb", "uc1", "uc2"};
  for (QKind q : select_q(opt.q)) {
    for (DPattern pattern : select_patterns(opt.pattern)) {
      SimConfig config;
      config.pattern = pattern;
      config.q_kind = q;
      config.seed = opt.seed;
      const Setting setting = make_setting(config);
      const std::string pn = pattern_name(pattern);
      const std::string qn = q_name(q);

      for (Threshold th : {Threshold::Sharp, Threshold::Conservative}) {
        const std::string tn = th == Threshold::Sharp ? "sharp" : "conservative";
        ConditionTableEntry entry{pn + "/" + qn, setting.model, setting.spec_direct};
        const ConditionReport rep = condition_table({entry}, th);
        for (std::size_t e = 0; e < rep.settings[0].columns.size(); ++e) {
          const auto& col = rep.settings[0].columns[e];
          cells.push_back({pn, qn, est_names[e], "sr", "explicit", tn, col.sr});
          cells.push_back({pn, qn, est_names[e], "sr_uncond", "explicit", tn, col.sr_uncond});
          if (th == Threshold::Sharp)
            cells.push_back({pn, qn, est_names[e], "nr_uncond", "exact", "-", col.nr_uncond});
        }
        // Min-over-lambda forms, reported alongside the explicit ones.
        for (bool use_qw : {false, true}) {
          const char* en = use_qw ? "cb" : "eb";
          cells.push_back({pn, qn, en, "sr", "minform", tn,
                           sr_ceb_minform(setting.model, setting.spec_direct, grid, use_qw, th)});
          cells.push_back({pn, qn, en, "sr_uncond", "minform", tn,
                           sr_uncond_minform(setting.model, setting.spec_direct, grid, use_qw, th)});
        }
      }
    }
  }

  if (opt.format == "json") {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& c : cells) {
      nlohmann::json j = verdict_json(c.verdict, c.form, c.threshold);
      j["pattern"] = c.pattern;
      j["q"] = c.q;
      j["estimator"] = c.estimator;
      j["condition"] = c.condition;
      doc.push_back(std::move(j));
    }
    auto out = open_output(opt.out);
    out << doc.dump(2) << "\n";
  } else {
    auto out = open_output(opt.out);
    out << "pattern,q,estimator,condition,form,threshold,lhs,rhs,margin,satisfied,lambda_at_min\n";
    for (const auto& c : cells) {
      out << c.pattern << ',' << c.q << ',' << c.estimator << ',' << c.condition << ','
          << c.form << ',' << c.threshold << ',' << format_double(c.verdict.lhs) << ','
          << format_double(c.verdict.rhs) << ',' << format_double(c.verdict.margin())
          << ',' << (c.verdict.satisfied ? "+" : "-") << ','
          << (c.verdict.lambda_at_min ? format_double(*c.verdict.lambda_at_min)
                                      : std::string())
          << "\n";
    }
  }

  // Compact grid on stdout (explicit forms, conservative threshold).
  std::printf("%-12s %-4s | %-8s %-8s %-8s %-8s\n", "setting", "", "eb", "cb", "uc1", "uc2");
  for (QKind q : select_q(opt.q)) {
    for (DPattern pattern : select_patterns(opt.pattern)) {
      const std::string pn = pattern_name(pattern);
      const std::string qn = q_name(q);
      std::map<std::string, std::string> by_key;
      for (const auto& c : cells) {
        if (c.pattern != pn || c.q != qn || c.form == "minform") continue;
        if (c.condition != "nr_uncond" && c.threshold != "conservative") continue;
        by_key[c.estimator + ":" + c.condition] = verdict_mark(c.verdict);
      }
      std::map<std::string, std::string> marks;
      for (const char* est : est_names)
        for (const char* cond : {"sr", "sr_uncond", "nr_uncond"})
          marks[est] += by_key[std::string(est) + ":" + cond];
      std::printf("%-12s %-4s | %-8s %-8s %-8s %-8s\n", qn.c_str(), pn.c_str(),
                  marks["eb"].c_str(), marks["cb"].c_str(), marks["uc1"].c_str(),
                  marks["uc2"].c_str());
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string pattern = "all";
  std::string q = "all";
  std::string kase = "all";
  std::uint64_t seed = 1;
  int reps = 10000;
  std::optional<double> t0;
  std::string out;
  std::string format = "csv";
};

int cmd_simulate(const SimulateOptions& opt) {
  const bool case1 = opt.kase == "all" || opt.kase == "1";
  const bool case2 = opt.kase == "all" || opt.kase == "2";
  const bool case2s = opt.kase == "all" || opt.kase == "2star";
  std::vector<int> columns = {0, 1};  // y, eb always
  if (case1) {
    columns.push_back(2);
    columns.push_back(3);
  }
  if (case2) {
    columns.push_back(4);
    columns.push_back(5);
  }
  if (case2s) {
    columns.push_back(6);
    columns.push_back(7);
  }

  struct Row {
    std::string q, pattern;
    double tr_qd;
    std::array<RiskEstimate, 8> cells;
  };
  std::vector<Row> rows;
  for (QKind q : select_q(opt.q)) {
    for (DPattern pattern : select_patterns(opt.pattern)) {
      SimConfig config;
      config.pattern = pattern;
      config.q_kind = q;
      config.seed = opt.seed;
      config.replications = opt.reps;
      config.t0_override = opt.t0;
      const SettingRisks risks = simulate_setting(config);
      Row row;
      row.q = q_name(q);
      row.pattern = pattern_name(pattern);
      row.tr_qd = risks.tr_qd;
      for (std::size_t c = 0; c < risks.losses.size(); ++c)
        row.cells[c] = summarize(risks.losses[c], kRiskColumns[c]);
      rows.push_back(std::move(row));
    }
  }

  if (opt.format == "json") {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& row : rows) {
      nlohmann::json j = {{"q", row.q}, {"pattern", row.pattern}, {"tr_qd", row.tr_qd}};
      for (int c : columns)
        j[kRiskColumns[c]] = {{"mean", row.cells[c].mean},
                              {"std_error", row.cells[c].std_error},
                              {"replications", row.cells[c].replications}};
      doc.push_back(std::move(j));
    }
    auto out = open_output(opt.out);
    out << doc.dump(2) << "\n";
  } else {
    auto out = open_output(opt.out);
    out << "q,pattern,tr_qd";
    for (int c : columns) out << ',' << kRiskColumns[c] << ',' << kRiskColumns[c] << "_se";
    out << "\n";
    for (const auto& row : rows) {
      out << row.q << ',' << row.pattern << ',' << format_double(row.tr_qd);
      for (int c : columns)
        out << ',' << format_double(row.cells[c].mean) << ','
            << format_double(row.cells[c].std_error);
      out << "\n";
    }
  }

  std::printf("%-10s %-3s %8s", "q", "d", "tr[QD]");
  for (int c : columns) std::printf(" %14s", kRiskColumns[c]);
  std::printf("\n");
  for (const auto& row : rows) {
    std::printf("%-10s %-3s %8.3f", row.q.c_str(), row.pattern.c_str(), row.tr_qd);
    for (int c : columns)
      std::printf(" %8.3f(%4.2f)", row.cells[c].mean, row.cells[c].std_error);
    std::printf("\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// risk-curve

struct RiskCurveOptions {
  std::string pattern = "a";
  std::string q = "identity";
  std::string target = "cb";  // cb: benchmarked weight Q_W; eb: plain Q
  std::uint64_t seed = 1;
  int points = 400;
  std::string out;
};

int cmd_risk_curve(const RiskCurveOptions& opt) {
  SimConfig config;
  config.pattern = kPatternNames.at(opt.pattern);
  config.q_kind = kQNames.at(opt.q);
  config.seed = opt.seed;
  const Setting setting = make_setting(config);
  const bool use_qw = opt.target == "cb";

  LambdaGrid grid = LambdaGrid::standard();
  grid.points = opt.points;
  auto out = open_output(opt.out);
  out << "lambda,delta_apr\n";
  for (double lambda : grid.values()) {
    out << format_double(lambda) << ','
        << format_double(delta_apr(setting.model, setting.spec_direct, lambda, use_qw))
        << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmarked Bayes and empirical Bayes estimation for area-level models"};
  app.require_subcommand(1);

  EstimateOptions est;
  auto* estimate = app.add_subcommand(
      "estimate", "Run the estimators on an area-level CSV file");
  estimate->add_option("--input", est.input, "input CSV (area_id,y,d,x1..xp[,w1..wm])")
      ->required();
  estimate->add_option("--spec", est.spec, "benchmark spec JSON sidecar")->required();
  estimate->add_option("--out", est.out, "output file")->required();
  estimate->add_option("--format", est.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  CheckOptions chk;
  auto* check = app.add_subcommand(
      "check", "Evaluate the improvement conditions over the built-in settings");
  check->add_option("--pattern", chk.pattern)->check(CLI::IsMember({"a", "b", "c", "d", "all"}));
  check->add_option("--q", chk.q)->check(CLI::IsMember({"identity", "d-inverse", "all"}));
  check->add_flag_callback("--all", [&chk] { chk.pattern = "all"; chk.q = "all"; });
  check->add_option("--seed", chk.seed);
  check->add_option("--out", chk.out, "output file")->required();
  check->add_option("--format", chk.format)->check(CLI::IsMember({"csv", "json"}));

  SimulateOptions sim;
  auto* simulate = app.add_subcommand(
      "simulate", "Monte Carlo unconditional risks over the built-in settings");
  simulate->add_option("--pattern", sim.pattern)->check(CLI::IsMember({"a", "b", "c", "d", "all"}));
  simulate->add_option("--q", sim.q)->check(CLI::IsMember({"identity", "d-inverse", "all"}));
  simulate->add_flag_callback("--all", [&sim] { sim.pattern = "all"; sim.q = "all"; });
  simulate->add_option("--case", sim.kase)->check(CLI::IsMember({"1", "2", "2star", "all"}));
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--reps", sim.reps)->check(CLI::PositiveNumber);
  double t0_value = 0.0;
  auto* t0_opt = simulate->add_option("--t0", t0_value, "override the fixed target");
  simulate->add_option("--out", sim.out, "output file")->required();
  simulate->add_option("--format", sim.format)->check(CLI::IsMember({"csv", "json"}));

  RiskCurveOptions curve;
  auto* risk_curve = app.add_subcommand(
      "risk-curve", "Second-order risk-difference approximation over a lambda grid");
  risk_curve->add_option("--pattern", curve.pattern)->check(CLI::IsMember({"a", "b", "c", "d"}));
  risk_curve->add_option("--q", curve.q)->check(CLI::IsMember({"identity", "d-inverse"}));
  risk_curve->add_option("--target", curve.target)->check(CLI::IsMember({"cb", "eb"}));
  risk_curve->add_option("--seed", curve.seed);
  risk_curve->add_option("--points", curve.points)->check(CLI::PositiveNumber);
  risk_curve->add_option("--out", curve.out, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*estimate) return cmd_estimate(est);
    if (*check) return cmd_check(chk);
    if (*simulate) {
      if (t0_opt->count() > 0) sim.t0 = t0_value;
      return cmd_simulate(sim);
    }
    if (*risk_curve) return cmd_risk_curve(curve);
  } catch (const ParseError& e) {
    std::cerr << "input error";
    if (e.line > 0) std::cerr << " (line " << e.line << ")";
    std::cerr << ": " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
