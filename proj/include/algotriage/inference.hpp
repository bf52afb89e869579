#pragma once

// Trial estimators: ITT with randomization controls, permutation inference,
// balance, first stage, disparity interactions, spillovers, power, compliance
// bounds and the targeting tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "algotriage/error.hpp"
#include "algotriage/frame.hpp"
#include "algotriage/random.hpp"
#include "algotriage/regression.hpp"
#include "algotriage/stats.hpp"

namespace algotriage::inference {

/// Adds one indicator column `rc_k` per sibling-group size k present in
/// `rc_stratum` (k >= 2) and returns their names.
inline std::vector<std::string> add_randomization_controls(Frame& f) {
  if (!f.has("rc_stratum")) return {};
  const std::vector<double> s = f.col("rc_stratum");  // f.set below may reallocate
  std::set<int> sizes;
  for (double v : s)
    if (v >= 2.0) sizes.insert(static_cast<int>(v));
  std::vector<std::string> names;
  for (int k : sizes) {
    std::vector<double> d(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) d[i] = s[i] == k ? 1.0 : 0.0;
    names.push_back("rc_" + std::to_string(k));
    f.set(names.back(), std::move(d));
  }
  return names;
}

/// Names of rc_* indicator columns already in the frame.
inline std::vector<std::string> randomization_controls(const Frame& f) {
  std::vector<std::string> out;
  for (const auto& n : f.names())
    if (n.rfind("rc_", 0) == 0 && n != "rc_stratum") out.push_back(n);
  return out;
}

/// `outcome ~ treated + randomization controls`, clustered by household.
inline RegressionSpec itt_spec(const Frame& f, const std::string& outcome,
                               std::optional<RowMask> sample = std::nullopt) {
  RegressionSpec s;
  s.outcome = outcome;
  s.focal = {"treated"};
  s.controls = randomization_controls(f);
  s.cluster = "household_id";
  s.sample = std::move(sample);
  return s;
}

inline RegressionResult itt(const Frame& f, const std::string& outcome,
                            std::optional<RowMask> sample = std::nullopt) {
  return ols_cluster(f, itt_spec(f, outcome, std::move(sample)));
}

struct PermutationResult {
  double p = 1.0;
  double observed = 0.0;
  std::size_t n_perm = 0;
  std::size_t skipped_strata = 0;
  std::vector<std::string> warnings;
};

struct PermutationOptions {
  std::size_t n_perm = 999;
  std::uint64_t seed = 1;
  bool studentized = false;
  unsigned threads = 1;
  std::string strata_column = "rc_stratum";
};

/// Re-randomizes the first focal term at the cluster level within strata and
/// recomputes its coefficient (or t statistic). Two-sided p counts permuted
/// statistics at least as large in absolute value, plus one.
inline PermutationResult permutation_test(const Frame& data, const RegressionSpec& spec,
                                          const PermutationOptions& opt) {
  if (opt.n_perm < 99) throw ConfigError("n_perm", "must be at least 99");
  const RowMask keep = spec.sample.value_or(RowMask(data.rows(), true));
  const Frame f = data.filter(keep);
  RegressionSpec base = spec;
  base.sample.reset();
  const std::string& focal = spec.focal.front();

  const auto observed_fit = ols_cluster(f, base);
  PermutationResult res;
  res.n_perm = opt.n_perm;
  res.observed = opt.studentized ? observed_fit.estimate(focal).t : observed_fit.estimate(focal).coef;

  // Cluster-level treatment and strata.
  const auto& cl = f.col(spec.cluster);
  const auto& t = f.col(focal);
  const bool has_strata = f.has(opt.strata_column);
  std::map<double, std::size_t> cluster_index;
  std::vector<double> cluster_treat;
  std::vector<double> cluster_stratum;
  std::vector<std::size_t> row_cluster(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    auto [it, inserted] = cluster_index.try_emplace(cl[i], cluster_treat.size());
    if (inserted) {
      cluster_treat.push_back(t[i]);
      cluster_stratum.push_back(has_strata ? f.col(opt.strata_column)[i] : 0.0);
    } else if (cluster_treat[it->second] != t[i]) {
      res.warnings.push_back("cluster " + std::to_string(cl[i]) + " has mixed '" + focal +
                             "' values; using its first row");
    }
    row_cluster[i] = it->second;
  }
  std::map<double, std::vector<std::size_t>> strata;
  for (std::size_t c = 0; c < cluster_treat.size(); ++c) strata[cluster_stratum[c]].push_back(c);
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [s, members] : strata) {
    if (members.size() < 2) {
      ++res.skipped_strata;
      res.warnings.push_back("stratum " + std::to_string(s) + " has a single cluster; skipped");
      continue;
    }
    groups.push_back(members);
  }

  // Fast path for the raw coefficient: Frisch-Waugh-Lovell with the
  // controls partialled out once.
  const auto rows = static_cast<Eigen::Index>(f.rows());
  Eigen::MatrixXd w(rows, 1);
  w.col(0).setOnes();
  for (std::size_t k = 1; k < observed_fit.terms.size(); ++k) {
    const auto& name = observed_fit.terms[k];
    if (name == focal) continue;
    const auto& c = f.col(name);
    w.conservativeResize(Eigen::NoChange, w.cols() + 1);
    for (Eigen::Index i = 0; i < rows; ++i) w(i, w.cols() - 1) = c[static_cast<std::size_t>(i)];
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> wqr(w);
  const Eigen::MatrixXd q = wqr.householderQ() * Eigen::MatrixXd::Identity(rows, w.cols());
  Eigen::VectorXd y(rows);
  const auto& ycol = f.col(spec.outcome);
  for (Eigen::Index i = 0; i < rows; ++i) y[i] = ycol[static_cast<std::size_t>(i)];
  const Eigen::VectorXd y_resid = y - q * (q.transpose() * y);

  auto statistic = [&](std::size_t b) {
    Engine rng = make_engine(opt.seed, b + 1);
    std::vector<double> treat = cluster_treat;
    for (const auto& members : groups) {
      for (std::size_t i = members.size() - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(treat[members[i]], treat[members[pick(rng)]]);
      }
    }
    if (opt.studentized) {
      Frame g = f;
      std::vector<double> d(f.rows());
      for (std::size_t i = 0; i < f.rows(); ++i) d[i] = treat[row_cluster[i]];
      g.set(focal, std::move(d));
      try {
        return ols_cluster(g, base).estimate(focal).t;
      } catch (const EstimationError&) {
        return 0.0;
      }
    }
    Eigen::VectorXd d(rows);
    for (Eigen::Index i = 0; i < rows; ++i) d[i] = treat[row_cluster[static_cast<std::size_t>(i)]];
    const Eigen::VectorXd d_resid = d - q * (q.transpose() * d);
    const double denom = d_resid.squaredNorm();
    return denom > 0.0 ? d_resid.dot(y_resid) / denom : 0.0;
  };

  std::vector<double> stats_out(opt.n_perm);
  const unsigned threads = std::max(1u, opt.threads);
  if (threads == 1) {
    for (std::size_t b = 0; b < opt.n_perm; ++b) stats_out[b] = statistic(b);
  } else {
    std::vector<std::thread> pool;
    for (unsigned th = 0; th < threads; ++th) {
      pool.emplace_back([&, th] {
        for (std::size_t b = th; b < opt.n_perm; b += threads) stats_out[b] = statistic(b);
      });
    }
    for (auto& th : pool) th.join();
  }
  const double cut = std::abs(res.observed) * (1.0 - 1e-12);
  std::size_t extreme = 0;
  for (double s : stats_out)
    if (std::abs(s) >= cut) ++extreme;
  res.p = (1.0 + static_cast<double>(extreme)) / (1.0 + static_cast<double>(opt.n_perm));
  return res;
}

struct BalanceResult {
  JointTest test;
  RegressionResult regression;
};

/// Regresses treatment on the covariates plus randomization controls and
/// tests the covariates jointly with a cluster-robust F.
inline BalanceResult balance_f_test(const Frame& f, const std::vector<std::string>& covariates) {
  RegressionSpec s;
  s.outcome = "treated";
  s.focal = covariates;
  s.controls = randomization_controls(f);
  s.cluster = "household_id";
  BalanceResult out{{}, ols_cluster(f, s)};
  out.test = wald_f(out.regression, covariates);
  return out;
}

inline std::vector<std::string> default_balance_covariates() {
  return {"black", "hispanic", "female", "snap", "sibling_count", "prior_harm_index"};
}

/// score_recorded on treated (optionally interacted with the score).
inline RegressionResult first_stage(Frame& f, bool score_interaction = false) {
  RegressionSpec s;
  s.outcome = "score_recorded";
  s.focal = {"treated"};
  if (score_interaction) {
    f.set("treated_x_score", product(f.col("treated"), f.col("score")));
    s.focal.push_back("treated_x_score");
    s.focal.push_back("score");
  }
  s.controls = randomization_controls(f);
  return ols_cluster(f, s);
}

inline double iv_wald(double itt_effect, double first_stage_coef) {
  if (first_stage_coef == 0.0) throw DomainError("iv_wald: first stage is zero");
  return itt_effect / first_stage_coef;
}

struct DisparityResult {
  std::string group;
  RegressionResult regression;
  TermEstimate type, treated, interaction;
  double pct_effect = 0.0;  // 100 * interaction / type
};

/// outcome ~ group + treated + treated x group + randomization controls.
inline DisparityResult disparity_model(Frame& f, const std::string& group, const std::string& outcome) {
  const auto& g = f.col(group);
  const auto& t = f.col("treated");
  std::size_t cells[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < f.rows(); ++i) ++cells[g[i] != 0.0][t[i] != 0.0];
  for (int gi = 0; gi < 2; ++gi)
    for (int ti = 0; ti < 2; ++ti)
      if (cells[gi][ti] == 0)
        throw DataError("empty cell " + group + "=" + std::to_string(gi) + ", treated=" + std::to_string(ti));
  const std::string inter = "treated_x_" + group;
  f.set(inter, product(t, g));
  RegressionSpec s;
  s.outcome = outcome;
  s.focal = {group, "treated", inter};
  s.controls = randomization_controls(f);
  DisparityResult out{group, ols_cluster(f, s), {}, {}, {}, 0.0};
  out.type = out.regression.estimate(group);
  out.treated = out.regression.estimate("treated");
  out.interaction = out.regression.estimate(inter);
  out.pct_effect = out.type.coef != 0.0 ? 100.0 * out.interaction.coef / out.type.coef : std::nan("");
  return out;
}

/// Stacked Wald chi-squared that the named coefficient of every regression
/// is zero. Cross-equation covariances come from the per-cluster influence
/// functions, so all regressions must share their clusters.
inline JointTest joint_wald_chi2(const std::vector<const RegressionResult*>& results,
                                 const std::vector<std::string>& terms) {
  if (results.size() < 2 || results.size() != terms.size())
    throw EstimationError("joint test needs at least two regressions, one term each");
  const auto q = static_cast<Eigen::Index>(results.size());
  for (const auto* r : results) {
    if (r->cluster_ids != results.front()->cluster_ids)
      throw DataError("joint test: regressions are not on a common clustered sample");
  }
  Eigen::VectorXd b(q);
  Eigen::MatrixXd v(q, q);
  std::vector<Eigen::Index> pos;
  for (Eigen::Index a = 0; a < q; ++a) {
    pos.push_back(static_cast<Eigen::Index>(results[static_cast<std::size_t>(a)]->position(terms[static_cast<std::size_t>(a)])));
    b[a] = results[static_cast<std::size_t>(a)]->coef[pos.back()];
  }
  for (Eigen::Index a = 0; a < q; ++a) {
    const auto& ra = *results[static_cast<std::size_t>(a)];
    for (Eigen::Index c = 0; c < q; ++c) {
      const auto& rc = *results[static_cast<std::size_t>(c)];
      const double factor = std::sqrt(ra.small_sample_factor * rc.small_sample_factor);
      v(a, c) = factor * ra.influence.col(pos[static_cast<std::size_t>(a)]).dot(rc.influence.col(pos[static_cast<std::size_t>(c)]));
    }
  }
  JointTest jt;
  jt.kind = "chi2";
  jt.df1 = static_cast<double>(q);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(v);
  if (!lu.isInvertible()) throw EstimationError("joint test: singular stacked covariance");
  jt.statistic = b.dot(lu.solve(b));
  jt.p = stats::chi2_sf(jt.statistic, jt.df1);
  return jt;
}

inline JointTest joint_disparity_chi2(const std::vector<DisparityResult>& results) {
  std::vector<const RegressionResult*> rs;
  std::vector<std::string> terms;
  for (const auto& r : results) {
    rs.push_back(&r.regression);
    terms.push_back("treated_x_" + r.group);
  }
  return joint_wald_chi2(rs, terms);
}

struct SpilloverResult {
  std::vector<RegressionResult> regressions;  // one per outcome
  std::vector<std::string> outcomes;
  std::size_t dropped_rows = 0;
  std::vector<std::string> warnings;
};

/// Adds `peer_share`: the treated share of the other referrals on the same
/// day. Days with one referral get NaN (dropped from regressions).
inline std::size_t add_peer_share(Frame& f, std::vector<std::string>* warnings = nullptr) {
  const auto& day = f.col("referral_day");
  const auto& ref = f.col("referral_id");
  const auto& t = f.col("treated");
  std::map<double, std::map<double, double>> referrals;  // day -> referral -> treated
  for (std::size_t i = 0; i < f.rows(); ++i) referrals[day[i]].try_emplace(ref[i], t[i]);
  std::map<double, std::pair<double, double>> totals;  // day -> (count, treated)
  for (const auto& [d, refs] : referrals) {
    double n = 0.0, tr = 0.0;
    for (const auto& [r, v] : refs) {
      n += 1.0;
      tr += v;
    }
    totals[d] = {n, tr};
  }
  std::vector<double> share(f.rows());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const auto [n, tr] = totals[day[i]];
    if (n < 2.0) {
      share[i] = std::nan("");
      ++dropped;
      continue;
    }
    share[i] = (tr - referrals[day[i]][ref[i]]) / (n - 1.0);
  }
  if (dropped && warnings) {
    warnings->push_back(std::to_string(dropped) + " rows on single-referral days dropped: peer share undefined");
  }
  f.set("peer_share", std::move(share));
  return dropped;
}

inline SpilloverResult spillover_test(Frame& f,
                                      std::vector<std::string> outcomes = {"screened_in", "decision_minutes",
                                                                           "harm_index"}) {
  SpilloverResult out;
  out.dropped_rows = add_peer_share(f, &out.warnings);
  f.set("treated_x_peer_share", product(f.col("treated"), f.col("peer_share")));
  for (const auto& o : outcomes) {
    RegressionSpec s;
    s.outcome = o;
    s.focal = {"treated", "peer_share", "treated_x_peer_share"};
    s.controls = randomization_controls(f);
    out.regressions.push_back(ols_cluster(f, s));
  }
  out.outcomes = std::move(outcomes);
  return out;
}

struct PowerInputs {
  double mean_c = 0.0;
  double mean_t = 0.0;
  double sd = 1.0;
  double clusters_per_arm = 1000;
  double cluster_size = 2;
  double icc = 0.4;
  double cv = 0.56;
  double alpha = 0.10;
};

inline double design_effect(double cluster_size, double icc, double cv) {
  return 1.0 + ((cv * cv + 1.0) * cluster_size - 1.0) * icc;
}

/// Two-sided power of a two-arm comparison under a normal approximation,
/// with variance inflated by the unequal-cluster design effect.
inline double power_calc(const PowerInputs& in) {
  if (!(in.sd > 0.0 && in.clusters_per_arm > 0.0 && in.cluster_size > 0.0 && in.alpha > 0.0 && in.alpha < 1.0))
    throw DomainError("power_calc: sd, clusters, cluster size must be positive and alpha in (0, 1)");
  if (!(in.icc >= 0.0 && in.icc < 1.0)) throw DomainError("power_calc: icc must lie in [0, 1)");
  if (!(in.cv >= 0.0)) throw DomainError("power_calc: cv must be >= 0");
  const double n = in.clusters_per_arm * in.cluster_size;
  const double se = in.sd * std::sqrt(2.0 * design_effect(in.cluster_size, in.icc, in.cv) / n);
  const double z = std::abs(in.mean_t - in.mean_c) / se;
  const double crit = stats::normal_quantile(1.0 - in.alpha / 2.0);
  return stats::normal_cdf(z - crit) + stats::normal_cdf(-z - crit);
}

/// Simulated rejection rate of the cluster-level two-sample z test. Cluster
/// sizes are Gamma with the given mean and cv (rounded, at least 1);
/// outcomes have a cluster random effect carrying share `icc` of the variance.
inline double power_simulate(const PowerInputs& in, std::size_t trials, std::uint64_t seed) {
  Engine rng = make_engine(seed, 0x706f776572ULL);
  const double crit = stats::normal_quantile(1.0 - in.alpha / 2.0);
  const auto clusters = static_cast<std::size_t>(in.clusters_per_arm);
  std::size_t reject = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    double sum[2] = {0, 0}, sumsq[2] = {0, 0}, count[2] = {0, 0};
    std::vector<std::pair<double, double>> cluster_totals[2];  // (sum, size)
    for (int arm = 0; arm < 2; ++arm) {
      const double mu = arm ? in.mean_t : in.mean_c;
      for (std::size_t c = 0; c < clusters; ++c) {
        double m = in.cluster_size;
        if (in.cv > 0.0) m = gamma_mean_var(rng, in.cluster_size, std::pow(in.cv * in.cluster_size, 2));
        const auto size = std::max<long>(1, std::lround(m));
        const double effect = std::sqrt(in.icc) * in.sd * std_normal(rng);
        double csum = 0.0;
        for (long k = 0; k < size; ++k) {
          const double y = mu + effect + std::sqrt(1.0 - in.icc) * in.sd * std_normal(rng);
          csum += y;
          sumsq[arm] += y * y;
        }
        sum[arm] += csum;
        count[arm] += static_cast<double>(size);
        cluster_totals[arm].push_back({csum, static_cast<double>(size)});
      }
    }
    // Cluster-robust variance of each arm mean.
    double var[2];
    for (int arm = 0; arm < 2; ++arm) {
      const double m = sum[arm] / count[arm];
      double v = 0.0;
      for (const auto& [s, n] : cluster_totals[arm]) v += (s - n * m) * (s - n * m);
      const double g = static_cast<double>(cluster_totals[arm].size());
      var[arm] = v / (count[arm] * count[arm]) * g / (g - 1.0);
    }
    const double diff = sum[1] / count[1] - sum[0] / count[0];
    if (std::abs(diff) / std::sqrt(var[0] + var[1]) > crit) ++reject;
  }
  return static_cast<double>(reject) / static_cast<double>(trials);
}

struct ComplianceBounds {
  double main = 0.0;
  double lower = 0.0;  // switchers at the sample minimum
  double upper = 0.0;  // switchers at the 99th percentile
  std::size_t switchers = 0;
  bool uninformative = false;
};

inline ComplianceBounds compliance_bounds(const Frame& f, const std::string& switched_col = "switched",
                                          const std::string& outcome = "harm_index") {
  const auto& sw = f.col(switched_col);
  const auto& y = f.col(outcome);
  ComplianceBounds out;
  for (double v : sw) out.switchers += v != 0.0;
  if (out.switchers == f.rows()) {
    out.main = out.lower = out.upper = std::nan("");
    out.uninformative = true;
    return out;
  }
  out.main = itt(f, outcome).estimate("treated").coef;
  if (out.switchers == 0) {
    out.lower = out.upper = out.main;
    return out;
  }
  const double lo = *std::min_element(y.begin(), y.end());
  const double hi = stats::quantile(y, 0.99);
  auto replaced = [&](double value) {
    Frame g = f;
    std::vector<double> v = y;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (sw[i] != 0.0) v[i] = value;
    g.set(outcome, std::move(v));
    return itt(g, outcome).estimate("treated").coef;
  };
  out.lower = replaced(lo);
  out.upper = replaced(hi);
  return out;
}

struct LooResult {
  std::vector<double> predictions;
  std::vector<std::string> used;
  std::vector<std::string> dropped;
};

/// Leave-one-out linear predictions of `outcome` from an intercept and the
/// features, via (yhat_i - h_ii y_i) / (1 - h_ii) from a single full fit.
inline LooResult loo_predicted_harm(const Frame& f, const std::string& outcome,
                                    const std::vector<std::string>& features) {
  const auto n = static_cast<Eigen::Index>(f.rows());
  LooResult out;
  Eigen::MatrixXd x(n, 1);
  x.col(0).setOnes();
  for (const auto& name : features) {
    const auto& c = f.col(name);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = c[static_cast<std::size_t>(i)];
    if (detail::adds_rank(x, v)) {
      x.conservativeResize(Eigen::NoChange, x.cols() + 1);
      x.col(x.cols() - 1) = v;
      out.used.push_back(name);
    } else {
      out.dropped.push_back(name);
    }
  }
  if (n <= x.cols() + 1) throw EstimationError("loo_predicted_harm: need more rows than features + 1");
  Eigen::VectorXd y(n);
  const auto& yc = f.col(outcome);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = yc[static_cast<std::size_t>(i)];
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, x.cols());
  const Eigen::VectorXd fitted = q * (q.transpose() * y);
  out.predictions.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = q.row(i).squaredNorm();
    if (h >= 1.0 - 1e-12) throw EstimationError("loo_predicted_harm: row " + std::to_string(i) + " has leverage 1");
    out.predictions[static_cast<std::size_t>(i)] = (fitted[i] - h * y[i]) / (1.0 - h);
  }
  return out;
}

inline std::vector<std::string> default_loo_features() {
  return {"prior_high_priority", "prior_injury", "prior_avoidable_er", "prior_maltreat_icd",
          "prior_intentional", "black", "hispanic", "female", "snap",
          "sibling_count", "motherless", "referral_day"};
}

struct TargetingResult {
  RegressionResult screened_out_harm;      // (1)
  RegressionResult screened_in_injury;     // (2)
  RegressionResult prior_harm_top;         // (3)
  RegressionResult predicted_harm_top;     // (4)
  LooResult loo;
};

/// The four targeting tests. Tests 3 and 4 use children with score >=
/// `top_score` (the top quartile of ventiles by default).
inline TargetingResult targeting_tests(Frame& f, const std::vector<std::string>& loo_features,
                                       int top_score = 16) {
  const std::vector<double> si = f.col("screened_in");
  RowMask out_mask(f.rows()), in_mask(f.rows()), top(f.rows());
  const auto& score = f.col("score");
  for (std::size_t i = 0; i < f.rows(); ++i) {
    out_mask[i] = si[i] == 0.0;
    in_mask[i] = si[i] != 0.0;
    top[i] = score[i] >= top_score;
  }
  std::vector<std::string> usable;
  for (const auto& n : loo_features)
    if (f.has(n)) usable.push_back(n);
  TargetingResult r;
  r.screened_out_harm = itt(f, "harm_index", out_mask);
  r.screened_in_injury = itt(f, "found_injury", in_mask);
  r.loo = loo_predicted_harm(f, "harm_index", usable);
  f.set("loo_predicted_harm", r.loo.predictions);
  f.set("treated_x_screened_in", product(f.col("treated"), si));
  RegressionSpec s;
  s.focal = {"treated", "screened_in", "treated_x_screened_in"};
  s.controls = randomization_controls(f);
  s.sample = top;
  s.outcome = "prior_harm_index";
  r.prior_harm_top = ols_cluster(f, s);
  s.outcome = "loo_predicted_harm";
  r.predicted_harm_top = ols_cluster(f, s);
  return r;
}

struct ScanPoint {
  std::size_t size = 0;
  double screened_out_itt = 0.0;
  double overall_itt = 0.0;
};

struct ScanResult {
  double slope = 0.0;
  double se = 0.0;
  double p = 1.0;
  std::vector<ScanPoint> points;
};

/// Random child subsets of uniform size in [min_size, N]; for each, the
/// treated-control difference in mean harm among screened-out children (x)
/// and overall (y). Returns the classical OLS slope of y on x.
inline ScanResult subgroup_targeting_scan(const Frame& f, std::size_t n_groups, std::size_t min_size,
                                          std::uint64_t seed) {
  const std::size_t n = f.rows();
  if (n < min_size || min_size < 2) throw DomainError("subgroup_targeting_scan: sample smaller than min_size");
  if (n_groups < 3) throw DomainError("subgroup_targeting_scan: need at least 3 groups");
  const auto& t = f.col("treated");
  const auto& si = f.col("screened_in");
  const auto& h = f.col("harm_index");
  ScanResult out;
  std::vector<std::size_t> idx(n);
  for (std::size_t g = 0; g < n_groups; ++g) {
    Engine rng = make_engine(seed, g + 1);
    std::uniform_int_distribution<std::size_t> size_dist(min_size, n);
    const std::size_t size = size_dist(rng);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < size && size < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    double s[2][2] = {{0, 0}, {0, 0}}, c[2][2] = {{0, 0}, {0, 0}};  // [out-only?][arm]
    for (std::size_t k = 0; k < size; ++k) {
      const std::size_t i = idx[k];
      const int arm = t[i] != 0.0;
      s[0][arm] += h[i];
      c[0][arm] += 1.0;
      if (si[i] == 0.0) {
        s[1][arm] += h[i];
        c[1][arm] += 1.0;
      }
    }
    if (c[1][0] == 0.0 || c[1][1] == 0.0) continue;
    out.points.push_back({size, s[1][1] / c[1][1] - s[1][0] / c[1][0], s[0][1] / c[0][1] - s[0][0] / c[0][0]});
  }
  const double m = static_cast<double>(out.points.size());
  if (m < 3) throw EstimationError("subgroup_targeting_scan: too few usable groups");
  double mx = 0.0, my = 0.0;
  for (const auto& p : out.points) {
    mx += p.screened_out_itt / m;
    my += p.overall_itt / m;
  }
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : out.points) {
    sxx += (p.screened_out_itt - mx) * (p.screened_out_itt - mx);
    sxy += (p.screened_out_itt - mx) * (p.overall_itt - my);
  }
  if (!(sxx > 1e-20 * m))
    throw EstimationError("subgroup_targeting_scan: zero variance in screened-out ITT across groups");
  out.slope = sxy / sxx;
  double sse = 0.0;
  for (const auto& p : out.points) {
    const double e = p.overall_itt - my - out.slope * (p.screened_out_itt - mx);
    sse += e * e;
  }
  out.se = std::sqrt(sse / (m - 2.0) / sxx);
  out.p = out.se > 0.0 ? stats::t_two_sided_p(out.slope / out.se, m - 2.0) : (out.slope != 0.0 ? 0.0 : 1.0);
  return out;
}

/// ITT within equal-count bins of referral day (terciles by default).
inline std::vector<RegressionResult> learning_split(const Frame& f, const std::string& outcome,
                                                    std::size_t parts = 3) {
  const auto& day = f.col("referral_day");
  std::vector<double> cuts;
  for (std::size_t k = 1; k < parts; ++k) cuts.push_back(stats::quantile(day, static_cast<double>(k) / parts));
  std::vector<RegressionResult> out;
  for (std::size_t k = 0; k < parts; ++k) {
    RowMask m(f.rows());
    for (std::size_t i = 0; i < f.rows(); ++i) {
      const auto bin = static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), day[i]) - cuts.begin());
      m[i] = bin == k;
    }
    out.push_back(itt(f, outcome, m));
  }
  return out;
}

}  // namespace algotriage::inference
