#pragma once

// OLS with cluster-robust (CR1) covariance and t(G-1) reference distribution.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "algotriage/error.hpp"
#include "algotriage/frame.hpp"
#include "algotriage/stats.hpp"

namespace algotriage {

struct RegressionSpec {
  std::string outcome;
  std::vector<std::string> focal;
  std::vector<std::string> controls;
  std::string cluster = "household_id";
  std::optional<RowMask> sample;  // rows to keep; all rows when empty
};

struct TermEstimate {
  std::string name;
  double coef = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 1.0;
};

struct JointTest {
  std::string kind;  // "F" or "chi2"
  double statistic = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;  // denominator df for F; 0 for chi2
  double p = 1.0;
};

struct RegressionResult {
  std::vector<std::string> terms;  // "_cons", focal terms, retained controls
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov;
  std::vector<std::string> dropped;  // collinear controls
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  std::size_t n_focal = 0;
  double outcome_mean_base = 0.0;  // mean outcome where every focal term is 0
  std::optional<double> permutation_p;
  std::optional<JointTest> joint;
  // Per-cluster score contributions (X'X)^{-1} X_g' u_g, one row per cluster,
  // clusters in ascending id order. Used for stacked Wald tests.
  Eigen::MatrixXd influence;
  std::vector<double> cluster_ids;
  double small_sample_factor = 1.0;

  double df() const { return static_cast<double>(n_clusters) - 1.0; }

  std::size_t position(const std::string& term) const {
    auto it = std::find(terms.begin(), terms.end(), term);
    if (it == terms.end()) throw DataError("no term '" + term + "' in regression result");
    return static_cast<std::size_t>(it - terms.begin());
  }

  TermEstimate estimate(const std::string& term) const {
    const auto k = static_cast<Eigen::Index>(position(term));
    TermEstimate e;
    e.name = term;
    e.coef = coef[k];
    e.se = std::sqrt(std::max(vcov(k, k), 0.0));
    if (e.se > 0.0) {
      e.t = e.coef / e.se;
      e.p = stats::t_two_sided_p(e.t, df());
    } else if (e.coef != 0.0) {
      e.t = std::copysign(HUGE_VAL, e.coef);
      e.p = 0.0;
    } else {
      e.t = 0.0;
      e.p = 1.0;
    }
    return e;
  }

  std::vector<TermEstimate> focal_estimates() const {
    std::vector<TermEstimate> out;
    for (std::size_t k = 1; k <= n_focal; ++k) out.push_back(estimate(terms[k]));
    return out;
  }

  std::pair<double, double> confidence_interval(const std::string& term, double level = 0.95) const {
    const auto e = estimate(term);
    const double q = stats::t_quantile(0.5 + level / 2.0, df());
    return {e.coef - q * e.se, e.coef + q * e.se};
  }
};

namespace detail {

inline bool adds_rank(const Eigen::MatrixXd& kept, const Eigen::VectorXd& candidate) {
  const double norm = candidate.norm();
  if (norm == 0.0) return false;
  if (kept.cols() == 0) return true;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(kept);
  const Eigen::VectorXd resid = candidate - kept * qr.solve(candidate);
  return resid.norm() > 1e-9 * norm;
}

}  // namespace detail

/// Fits `outcome ~ 1 + focal + controls` on the selected rows. Controls that
/// are collinear with earlier columns are dropped and listed; a collinear
/// focal term is an error.
inline RegressionResult ols_cluster(const Frame& data, const RegressionSpec& spec) {
  if (spec.focal.empty()) throw EstimationError("regression needs at least one focal term");
  for (const auto& f : spec.focal) {
    if (std::find(spec.controls.begin(), spec.controls.end(), f) != spec.controls.end())
      throw EstimationError("focal term '" + f + "' also listed as a control");
  }
  const std::size_t total = data.rows();
  RowMask keep = spec.sample.value_or(RowMask(total, true));
  if (keep.size() != total) throw DataError("sample mask size mismatch");

  const auto& y_all = data.col(spec.outcome);
  const auto& g_all = data.col(spec.cluster);
  std::vector<const std::vector<double>*> regressors;
  for (const auto& n : spec.focal) regressors.push_back(&data.col(n));
  for (const auto& n : spec.controls) regressors.push_back(&data.col(n));

  // Rows with any missing value are excluded.
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < total; ++i) {
    if (!keep[i] || std::isnan(y_all[i]) || std::isnan(g_all[i])) continue;
    bool ok = true;
    for (const auto* c : regressors) ok = ok && !std::isnan((*c)[i]);
    if (ok) rows.push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n == 0) throw EstimationError("regression sample is empty");

  Eigen::MatrixXd x(n, 1);
  x.col(0).setOnes();
  RegressionResult res;
  res.terms.push_back("_cons");
  auto column_of = [&](const std::vector<double>& c) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = c[rows[static_cast<std::size_t>(i)]];
    return v;
  };
  auto append = [&](const Eigen::VectorXd& v) {
    x.conservativeResize(Eigen::NoChange, x.cols() + 1);
    x.col(x.cols() - 1) = v;
  };
  for (std::size_t k = 0; k < spec.focal.size(); ++k) {
    const Eigen::VectorXd v = column_of(*regressors[k]);
    if (!detail::adds_rank(x, v))
      throw EstimationError("focal term '" + spec.focal[k] + "' is collinear with the design");
    append(v);
    res.terms.push_back(spec.focal[k]);
  }
  for (std::size_t k = 0; k < spec.controls.size(); ++k) {
    const Eigen::VectorXd v = column_of(*regressors[spec.focal.size() + k]);
    if (detail::adds_rank(x, v)) {
      append(v);
      res.terms.push_back(spec.controls[k]);
    } else {
      res.dropped.push_back(spec.controls[k]);
    }
  }
  res.n_focal = spec.focal.size();
  const Eigen::Index kcols = x.cols();
  if (n <= kcols) throw EstimationError("regression has no residual degrees of freedom");

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = y_all[rows[static_cast<std::size_t>(i)]];

  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  const Eigen::MatrixXd bread = ldlt.solve(Eigen::MatrixXd::Identity(kcols, kcols));
  res.coef = bread * (x.transpose() * y);
  const Eigen::VectorXd u = y - x * res.coef;

  // Clusters in ascending id order.
  std::map<double, std::vector<Eigen::Index>> clusters;
  for (Eigen::Index i = 0; i < n; ++i) clusters[g_all[rows[static_cast<std::size_t>(i)]]].push_back(i);
  const auto g = static_cast<Eigen::Index>(clusters.size());
  if (g < 2) throw EstimationError("cluster-robust covariance needs at least two clusters");
  res.influence.resize(g, kcols);
  Eigen::Index gi = 0;
  for (const auto& [id, members] : clusters) {
    Eigen::VectorXd score = Eigen::VectorXd::Zero(kcols);
    for (auto i : members) score.noalias() += x.row(i).transpose() * u[i];
    res.influence.row(gi++) = (bread * score).transpose();
    res.cluster_ids.push_back(id);
  }
  const double gd = static_cast<double>(g), nd = static_cast<double>(n), kd = static_cast<double>(kcols);
  res.small_sample_factor = gd / (gd - 1.0) * (nd - 1.0) / (nd - kd);
  res.vcov = res.small_sample_factor * (res.influence.transpose() * res.influence);
  res.n_obs = static_cast<std::size_t>(n);
  res.n_clusters = static_cast<std::size_t>(g);

  double base_sum = 0.0;
  std::size_t base_n = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool base = true;
    for (Eigen::Index k = 1; k <= static_cast<Eigen::Index>(res.n_focal); ++k) base = base && x(i, k) == 0.0;
    if (base) {
      base_sum += y[i];
      ++base_n;
    }
  }
  res.outcome_mean_base = base_n ? base_sum / static_cast<double>(base_n) : std::nan("");
  return res;
}

/// Cluster-robust Wald F test that all listed terms are zero, F(q, G-1).
inline JointTest wald_f(const RegressionResult& r, const std::vector<std::string>& terms) {
  if (terms.empty()) throw EstimationError("joint test needs at least one term");
  const auto q = static_cast<Eigen::Index>(terms.size());
  Eigen::VectorXd b(q);
  Eigen::MatrixXd v(q, q);
  std::vector<Eigen::Index> idx;
  for (const auto& t : terms) idx.push_back(static_cast<Eigen::Index>(r.position(t)));
  for (Eigen::Index i = 0; i < q; ++i) {
    b[i] = r.coef[idx[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < q; ++j) v(i, j) = r.vcov(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  JointTest jt;
  jt.kind = "F";
  jt.df1 = static_cast<double>(q);
  jt.df2 = r.df();
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(v);
  if (!lu.isInvertible()) {
    jt.statistic = b.isZero(0.0) ? 0.0 : HUGE_VAL;
    jt.p = b.isZero(0.0) ? 1.0 : 0.0;
    return jt;
  }
  jt.statistic = b.dot(lu.solve(b)) / jt.df1;
  jt.p = stats::f_sf(jt.statistic, jt.df1, jt.df2);
  return jt;
}

}  // namespace algotriage
