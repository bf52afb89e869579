// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <Eigen/Dense>

#include "algotriage/cohort.hpp"
#include "algotriage/counterfactual.hpp"
#include "algotriage/dataset.hpp"
#include "algotriage/index.hpp"
#include "algotriage/inference.hpp"
#include "algotriage/model.hpp"
#include "algotriage/regression.hpp"
#include "algotriage/stats.hpp"
#include "cli.hpp"
#include "support.hpp"

using namespace algotriage;
using testing_support::analysis_frame;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Accuracy and harm closed forms on a 3x3 grid.
Outcome closed_forms() {
  const auto t0 = std::chrono::steady_clock::now();
  const double grid[9][3] = {{1, 1, 1}, {1, 1, 2}, {2, 1, 2}, {0.5, 2, 1.5}, {1, 4, 3},
                             {4, 1, 1}, {2, 2, 4}, {0.25, 0.5, 2}, {3, 0.5, 1.2}};
  int ok = 0;
  double worst_z = 0.0, worst_rel = 0.0;
  std::uint64_t seed = 101;
  for (const auto& g : grid) {
    const double vr = g[0], ve = g[1], a = g[2];
    model::ModelParams p;
    p.mean_r = 5.0;
    p.alpha = 5.0;
    p.var_r = vr;
    p.var_eps_c = ve;
    p.a = a;
    const auto s = model::simulate_assessments(p, 1000000, seed++);
    const auto vp = stats::batch_estimate(s.size(), 100, [&](std::size_t b, std::size_t e) {
      return stats::variance(std::span<const double>(s.p).subspan(b, e - b));
    });
    const auto eh = stats::batch_estimate(s.size(), 100, [&](std::size_t b, std::size_t e) {
      return stats::mean(std::span<const double>(s.harm).subspan(b, e - b));
    });
    // Direct form: p = (1-g)(r - alpha) - g eps, g = vr / (vr + ve / a^2).
    const double v_eps = ve / (a * a);
    const double gam = vr / (vr + v_eps);
    const double direct = (1 - gam) * (1 - gam) * vr + gam * gam * v_eps;
    const double closed = ve * vr / (a * a * vr + ve);
    const double z = std::abs(vp.value - closed) / vp.mcse;
    const double rel = std::abs(eh.value - closed / 2.0) / (closed / 2.0);
    worst_z = std::max(worst_z, z);
    worst_rel = std::max(worst_rel, rel);
    if (z <= 3.0 && rel <= 0.01 && std::abs(direct - closed) < 1e-12 &&
        std::abs(model::var_prediction_error(vr, ve, a) - closed) < 1e-12)
      ++ok;
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << ok << "/9 grid points; max |z| " << worst_z << ", max rel harm error " << worst_rel << ", " << secs << " s";
  return {ok == 9 && secs < 30.0, os.str()};
}

// 2. Orderings with two groups and an over-estimated group for the bias claim.
Outcome orderings() {
  auto p = model::ModelParams::with_groups({{"B", 2.0}, {"W", 1.0}}, 1.0, 2.0);
  p.groups[0].alpha = p.groups[0].mean_r + std::sqrt(p.groups[0].var_r);
  const auto rep = model::verify_propositions(p, 1000000, 2024, 100);
  std::ostringstream os;
  bool ok = true;
  for (const char* id : {"1.1", "1.2", "2.1", "2.2", "3"}) {
    const auto* c = rep.find(id);
    const bool pass = c && c->status == model::CheckStatus::pass;
    ok = ok && pass;
    os << id << "=" << (c ? model::to_string(c->status) : "missing") << " ";
  }
  return {ok, os.str()};
}

// 3. Cluster-robust OLS and leave-one-out predictions against direct oracles.
Outcome oracles() {
  double worst = 0.0;
  Engine rng = make_engine(99, 3);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 20 + static_cast<std::size_t>(uniform01(rng) * 41.0);
    const std::size_t g = 6 + static_cast<std::size_t>(uniform01(rng) * 10.0);
    const Frame f = testing_support::random_frame(n, g, 5000 + static_cast<std::uint64_t>(inst));
    RegressionSpec spec;
    spec.outcome = "y";
    spec.focal = {"treated"};
    spec.controls = {"x1", "x2", "x3"};
    const auto r = ols_cluster(f, spec);

    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd x(N, 5);
    Eigen::VectorXd y(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto k = static_cast<std::size_t>(i);
      x.row(i) << 1.0, f.col("treated")[k], f.col("x1")[k], f.col("x2")[k], f.col("x3")[k];
      y[i] = f.col("y")[k];
    }
    const Eigen::MatrixXd bread = (x.transpose() * x).inverse();
    const Eigen::VectorXd beta = bread * x.transpose() * y;
    const Eigen::VectorXd u = y - x * beta;
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(5, 5);
    std::map<double, Eigen::VectorXd> score;
    for (Eigen::Index i = 0; i < N; ++i) {
      auto& s = score[f.col("household_id")[static_cast<std::size_t>(i)]];
      if (s.size() == 0) s = Eigen::VectorXd::Zero(5);
      s += x.row(i).transpose() * u[i];
    }
    for (const auto& [id, s] : score) meat += s * s.transpose();
    const double G = static_cast<double>(score.size()), Nd = static_cast<double>(n);
    const Eigen::MatrixXd v = G / (G - 1.0) * (Nd - 1.0) / (Nd - 5.0) * bread * meat * bread;
    worst = std::max(worst, (r.coef - beta).cwiseAbs().maxCoeff());
    worst = std::max(worst, (r.vcov - v).cwiseAbs().maxCoeff());

    const auto loo = inference::loo_predicted_harm(f, "y", {"x1", "x2", "x3"});
    for (Eigen::Index i = 0; i < N; ++i) {
      Eigen::MatrixXd xi(N - 1, 4);
      Eigen::VectorXd yi(N - 1);
      for (Eigen::Index j = 0, row = 0; j < N; ++j) {
        if (j == i) continue;
        xi.row(row) << 1.0, x(j, 2), x(j, 3), x(j, 4);
        yi[row++] = y[j];
      }
      const Eigen::VectorXd b = (xi.transpose() * xi).inverse() * xi.transpose() * yi;
      const double pred = b[0] + b[1] * x(i, 2) + b[2] * x(i, 3) + b[3] * x(i, 4);
      worst = std::max(worst, std::abs(pred - loo.predictions[static_cast<std::size_t>(i)]));
    }
  }
  std::ostringstream os;
  os << "100 instances, max abs deviation " << worst;
  return {worst <= 1e-9, os.str()};
}

// 4. Null calibration of the permutation and balance tests.
Outcome null_calibration() {
  const auto t0 = std::chrono::steady_clock::now();
  cohort::CohortConfig c;
  c.itt_effect_sd = 0.0;
  const cohort::CohortGenerator gen(c);
  std::vector<double> perm_p;
  int perm_rej = 0, bal_rej = 0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    Frame f = analysis_frame(gen, 70000 + static_cast<std::uint64_t>(s));
    inference::PermutationOptions po;
    po.n_perm = 199;
    po.seed = 900 + static_cast<std::uint64_t>(s);
    const auto pr = inference::permutation_test(f, inference::itt_spec(f, "harm_index"), po);
    perm_p.push_back(pr.p);
    perm_rej += pr.p <= 0.05;
    bal_rej += inference::balance_f_test(f, inference::default_balance_covariates()).test.p <= 0.05;
  }
  const double fp = perm_rej / static_cast<double>(seeds);
  const double fb = bal_rej / static_cast<double>(seeds);
  const auto ks = stats::ks_uniform(perm_p);
  std::ostringstream os;
  os << "permutation rejects " << fp << ", balance rejects " << fb << ", KS p " << ks.p_value << ", "
     << seconds_since(t0) << " s";
  return {std::abs(fp - 0.05) <= 0.02 && std::abs(fb - 0.05) <= 0.02 && ks.p_value > 0.01, os.str()};
}

// 5. Coverage of an injected effect at trial size.
Outcome effect_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const cohort::CohortConfig c;
  const cohort::CohortGenerator gen(c);
  int cover = 0;
  double sum = 0.0;
  for (int s = 0; s < 100; ++s) {
    const Frame f = analysis_frame(gen, 1000 + static_cast<std::uint64_t>(s));
    const auto r = inference::itt(f, "harm_index");
    const auto [lo, hi] = r.confidence_interval("treated");
    cover += lo <= c.itt_effect_sd && c.itt_effect_sd <= hi;
    sum += r.estimate("treated").coef;
  }
  const double iv = inference::iv_wald(-0.061, 0.73);
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "coverage " << cover << "/100, mean estimate " << sum / 100 << ", iv " << iv << ", " << secs << " s";
  return {cover >= 93 && std::abs(iv - (-0.061 / 0.73)) < 1e-15 && std::abs(iv - (-0.0836)) < 5e-5 && std::abs(iv - (-0.083)) <= 0.001 && secs < 120.0,
          os.str()};
}

// 6. Index transforms.
Outcome index_properties() {
  const cohort::CohortGenerator gen(cohort::CohortConfig{});
  Frame f = dataset::to_frame(gen.generate(31));
  const auto om = dataset::outcome_matrix(f);
  const auto h = index::harm_index(om, {});
  std::vector<double> hc;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (om.reference_mask[i]) hc.push_back(h[i]);
  const bool standardized = std::abs(stats::mean(hc)) < 1e-9 && std::abs(stats::variance(hc) - 1.0) < 1e-9;

  // Rows are all orderings of one vector and of its double, so every pair of
  // columns has the same joint distribution and the covariance is exchangeable.
  index::OutcomeMatrix ex;
  std::array<double, 5> base = {0, 1, 1, 2, 5};
  std::vector<std::array<double, 5>> rows;
  std::sort(base.begin(), base.end());
  do {
    rows.push_back(base);
    auto twice = base;
    for (auto& v : twice) v *= 2.0;
    rows.push_back(twice);
  } while (std::next_permutation(base.begin(), base.end()));
  ex.counts.resize(static_cast<Eigen::Index>(rows.size()), 5);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < 5; ++j) ex.counts(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  ex.reference_mask.assign(rows.size(), true);
  index::IndexSpec eq, ob, pc;
  ob.variant = index::Variant::obrien;
  pc.variant = index::Variant::pca1;
  const auto a = index::harm_index(ex, eq);
  const auto b = index::harm_index(ex, ob);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));

  const double alpha = index::cronbach_alpha(om);
  const auto pm = index::fit_index(om, pc);
  bool ordered = pm.eigenvalues.size() == 5;
  for (Eigen::Index k = 1; k < pm.eigenvalues.size(); ++k) ordered = ordered && pm.eigenvalues[k - 1] >= pm.eigenvalues[k];
  std::ostringstream os;
  os << "standardized " << standardized << ", O'Brien vs equal max diff " << diff << ", Cronbach alpha " << alpha
     << ", pca1 eigenvalues ordered " << ordered;
  return {standardized && diff < 1e-9 && std::abs(alpha - 0.81) <= 0.05 && ordered, os.str()};
}

bool check_curve(const counterfactual::BoundCurve& c, int& binding) {
  bool ok = c.r_grid.front() == 0.0 && c.algo_mean.front() == c.human_only_mean;
  for (std::size_t k = 1; k < c.r_grid.size(); ++k) ok = ok && c.algo_mean[k] <= c.algo_mean[k - 1];
  for (std::size_t k = 0; k < c.r_grid.size(); ++k) ok = ok && c.oracle_mean[k] <= c.algo_mean[k] + 1e-12;
  double max_out_in = -HUGE_VAL;
  for (double v : c.cells.outcomes[0][1]) max_out_in = std::max(max_out_in, v);
  if (max_out_in - c.r_grid.back() <= c.harm_floor) {
    ++binding;
    ok = ok && std::abs(c.algo_mean.back() - counterfactual::bound_asymptote(c)) <= 1e-9;
  }
  return ok;
}

// 7. Bound curve contract on generated and random datasets.
Outcome bound_contract() {
  const auto grid = counterfactual::default_r_grid();
  counterfactual::DecisionRule rule;
  int checked = 0, good = 0, binding = 0;
  const cohort::CohortGenerator gen(cohort::CohortConfig{});
  for (int s = 0; s < 10; ++s) {
    Frame f = dataset::to_frame(gen.generate(400 + static_cast<std::uint64_t>(s)));
    const auto model = dataset::add_indices(f, {});
    const Frame ctrl = f.filter(where_equal(f, "treated", 0.0));
    ++checked;
    good += check_curve(counterfactual::bound_algo_only(ctrl, rule, grid, model.floor(), 5), binding);
  }
  // Bounded outcomes, where the floor binds by R = 4.
  Engine rng = make_engine(17, 1);
  for (int s = 0; s < 40; ++s) {
    const std::size_t n = 30 + static_cast<std::size_t>(uniform01(rng) * 200.0);
    Frame f(n);
    std::vector<double> score(n), si(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      score[i] = 1.0 + std::floor(uniform01(rng) * 20.0);
      si[i] = bernoulli(rng, 0.3) ? 1.0 : 0.0;
      y[i] = std::floor(uniform01(rng) * 5.0) * 0.75 - 1.0;
    }
    f.set("score", score);
    f.set("screened_in", si);
    f.set("harm_index", y);
    ++checked;
    good += check_curve(counterfactual::bound_algo_only(f, rule, grid, -1.0, static_cast<std::uint64_t>(s)), binding);
  }
  std::ostringstream os;
  os << good << "/" << checked << " datasets satisfy the contract; floor binds at R=4 in " << binding;
  return {good == checked && binding > 0, os.str()};
}

// 8. Mandate identity.
Outcome mandate() {
  // 1000 children, 60 at score 20, 18 of those already screened in.
  const std::size_t n = 1000;
  Frame f(n);
  std::vector<double> score(n), si(n);
  for (std::size_t i = 0; i < n; ++i) {
    score[i] = i < 60 ? 20.0 : 1.0 + static_cast<double>(i % 19);
    si[i] = (i < 18 || (i >= 60 && i % 4 == 0)) ? 1.0 : 0.0;
  }
  f.set("score", score);
  f.set("screened_in", si);
  counterfactual::DecisionRule m;
  m.kind = counterfactual::RuleKind::mandate;
  const auto before = counterfactual::apply_rule(f, {counterfactual::RuleKind::human_only}, 1);
  const auto after = counterfactual::apply_rule(f, m, 1);
  const auto added = std::count(after.begin(), after.end(), true) - std::count(before.begin(), before.end(), true);
  const bool exact = added == 42;  // 0.06 * 0.70 * 1000

  // Same identity on a generated cohort.
  const cohort::CohortGenerator gen(cohort::CohortConfig{});
  Frame c = dataset::to_frame(gen.generate(8));
  const auto b2 = counterfactual::apply_rule(c, {counterfactual::RuleKind::human_only}, 1);
  const auto a2 = counterfactual::apply_rule(c, m, 1);
  long expected = 0, top = 0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    top += c.col("score")[i] == 20.0;
    expected += c.col("score")[i] == 20.0 && c.col("screened_in")[i] == 0.0;
  }
  const long added2 = std::count(a2.begin(), a2.end(), true) - std::count(b2.begin(), b2.end(), true);
  std::ostringstream os;
  os << "constructed: +" << added << " of 1000; cohort: +" << added2 << " (expected " << expected
     << "), score-20 share " << static_cast<double>(top) / static_cast<double>(c.rows());
  return {exact && added2 == expected, os.str()};
}

// 9. Targeting sign pattern under reallocation.
Outcome targeting() {
  const cohort::CohortGenerator gen(testing_support::reallocation_config());
  int pattern = 0, scan_ok = 0;
  for (int s = 0; s < 100; ++s) {
    Frame f = analysis_frame(gen, 3000 + static_cast<std::uint64_t>(s));
    const auto t = inference::targeting_tests(f, inference::default_loo_features(), 16);
    pattern += t.screened_out_harm.estimate("treated").coef < 0.0 &&
               t.predicted_harm_top.estimate("treated_x_screened_in").coef > 0.0;
    const auto scan = inference::subgroup_targeting_scan(f, 1000, 100, static_cast<std::uint64_t>(s));
    scan_ok += scan.slope > 0.0 && scan.p < 0.01;
  }
  std::ostringstream os;
  os << "sign pattern in " << pattern << "/100 seeds; scan slope positive with p<0.01 in " << scan_ok << "/100";
  return {pattern >= 90 && scan_ok >= 90, os.str()};
}

// 10. MVPF arithmetic.
Outcome mvpf() {
  const auto r = counterfactual::mvpf(20, 62500, 280000, 15000, 2);
  std::ostringstream os;
  os << "net government cost " << r.net_government_cost << ", infinite " << r.infinite;
  return {r.infinite && r.net_government_cost == -940000.0 && r.savings == 1250000.0, os.str()};
}

// 11. Every subcommand replays to identical hashes.
Outcome determinism() {
  const auto dir = testing_support::fresh_dir("acceptance_replay");
  const std::string out = dir.string();
  std::ostringstream sink, err;
  auto call = [&](std::vector<std::string> a) { return cli::run(a, sink, err); };
  int rc = 0;
  rc |= call({"generate", "--n", "800", "--seed", "5", "--out", out});
  rc |= call({"model-verify", "--n", "20000", "--out", out});
  rc |= call({"analyze", "--data", out + "/cohort.csv", "--table", "all", "--n-perm", "99", "--out", out});
  rc |= call({"counterfactual", "--data", out + "/cohort.csv", "--rule", "algo_only", "--out", out});
  rc |= call({"report", "--in", out, "--out", out});
  int replayed = 0, same = 0;
  for (const char* m : {"manifest_generate.json", "manifest_model-verify.json", "manifest_analyze_all.json",
                        "manifest_counterfactual.json", "manifest_report.json"}) {
    ++replayed;
    const auto target = dir / ("replay_" + std::string(m));
    same += call({"replay", "--manifest", (dir / m).string(), "--out", target.string()}) == 0;
  }
  std::ostringstream os;
  os << "runs exit " << rc << "; " << same << "/" << replayed << " manifests replay identically";
  if (!err.str().empty()) os << "; stderr: " << err.str().substr(0, 200);
  return {rc == 0 && same == replayed, os.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"closed forms", closed_forms},
      {"orderings", orderings},
      {"estimator oracles", oracles},
      {"null calibration", null_calibration},
      {"effect recovery", effect_recovery},
      {"index properties", index_properties},
      {"bound contract", bound_contract},
      {"mandate arithmetic", mandate},
      {"targeting mechanism", targeting},
      {"mvpf", mvpf},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << i + 1 << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
