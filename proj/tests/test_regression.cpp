#include <gtest/gtest.h>

#include <map>

#include "algotriage/regression.hpp"
#include "support.hpp"

using namespace algotriage;

namespace {

struct Oracle {
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;
};

// Direct normal equations and the CR1 sandwich.
Oracle brute_force(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& cluster) {
  Oracle o;
  const Eigen::MatrixXd bread = (x.transpose() * x).inverse();
  o.beta = bread * x.transpose() * y;
  const Eigen::VectorXd u = y - x * o.beta;
  std::map<double, Eigen::VectorXd> s;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto& v = s[cluster[static_cast<std::size_t>(i)]];
    if (v.size() == 0) v = Eigen::VectorXd::Zero(x.cols());
    v += x.row(i).transpose() * u[i];
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  for (const auto& [k, v] : s) meat += v * v.transpose();
  const double g = static_cast<double>(s.size()), n = static_cast<double>(x.rows()), k = static_cast<double>(x.cols());
  o.vcov = g / (g - 1) * (n - 1) / (n - k) * bread * meat * bread;
  return o;
}

}  // namespace

TEST(Regression, ToyDatasetMatchesHandOracle) {
  // Six rows in three clusters.
  Frame f(6);
  f.set("y", {1.0, 2.0, 2.5, 4.0, 3.0, 6.5});
  f.set("treated", {0, 0, 1, 1, 0, 1});
  f.set("x", {0.5, 1.5, 0.2, 2.0, 1.0, 3.0});
  f.set("household_id", {1, 1, 2, 2, 3, 3});
  RegressionSpec s;
  s.outcome = "y";
  s.focal = {"treated"};
  s.controls = {"x"};
  const auto r = ols_cluster(f, s);
  Eigen::MatrixXd x(6, 3);
  x << 1, 0, 0.5, 1, 0, 1.5, 1, 1, 0.2, 1, 1, 2.0, 1, 0, 1.0, 1, 1, 3.0;
  Eigen::VectorXd y(6);
  y << 1.0, 2.0, 2.5, 4.0, 3.0, 6.5;
  const auto o = brute_force(x, y, f.col("household_id"));
  EXPECT_LT((r.coef - o.beta).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((r.vcov - o.vcov).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(r.n_clusters, 3u);
  EXPECT_EQ(r.n_obs, 6u);
  EXPECT_EQ(r.terms, (std::vector<std::string>{"_cons", "treated", "x"}));
  EXPECT_DOUBLE_EQ(r.df(), 2.0);
}

TEST(Regression, RandomInstancesMatchOracle) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Frame f = testing_support::random_frame(40, 12, seed);
    RegressionSpec s;
    s.outcome = "y";
    s.focal = {"treated", "x1"};
    s.controls = {"x2"};
    const auto r = ols_cluster(f, s);
    Eigen::MatrixXd x(40, 4);
    Eigen::VectorXd y(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
      const auto k = static_cast<std::size_t>(i);
      x.row(i) << 1, f.col("treated")[k], f.col("x1")[k], f.col("x2")[k];
      y[i] = f.col("y")[k];
    }
    const auto o = brute_force(x, y, f.col("household_id"));
    EXPECT_LT((r.coef - o.beta).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((r.vcov - o.vcov).cwiseAbs().maxCoeff(), 1e-9);
    // p-value from the t distribution with G - 1 df.
    const auto e = r.estimate("treated");
    EXPECT_NEAR(e.p, stats::t_two_sided_p(e.coef / std::sqrt(o.vcov(1, 1)), 11.0), 1e-9);
  }
}

TEST(Regression, CollinearControlDroppedFocalRejected) {
  Frame f = testing_support::random_frame(50, 15, 3);
  std::vector<double> dup = f.col("x1");
  for (auto& v : dup) v *= 2.0;
  f.set("x1_twice", dup);
  RegressionSpec s;
  s.outcome = "y";
  s.focal = {"treated"};
  s.controls = {"x1", "x1_twice"};
  const auto r = ols_cluster(f, s);
  EXPECT_EQ(r.dropped, std::vector<std::string>{"x1_twice"});
  s.focal = {"x1_twice"};
  s.controls = {"x1"};
  // Focal terms enter first, so the control becomes the redundant one.
  EXPECT_EQ(ols_cluster(f, s).dropped, std::vector<std::string>{"x1"});
  s.focal = {"treated", "x1", "x1_twice"};
  s.controls = {};
  EXPECT_THROW(ols_cluster(f, s), EstimationError);
}

TEST(Regression, SampleMaskAndMissingValues) {
  Frame f = testing_support::random_frame(60, 20, 4);
  auto y = f.col("y");
  y[0] = std::nan("");
  f.set("y", y);
  RegressionSpec s;
  s.outcome = "y";
  s.focal = {"treated"};
  const auto r = ols_cluster(f, s);
  EXPECT_EQ(r.n_obs, 59u);
  RowMask m(60, true);
  for (std::size_t i = 30; i < 60; ++i) m[i] = false;
  s.sample = m;
  EXPECT_EQ(ols_cluster(f, s).n_obs, 29u);
}

TEST(Regression, SingleClusterIsError) {
  Frame f = testing_support::random_frame(20, 5, 5);
  f.set("one", std::vector<double>(20, 1.0));
  RegressionSpec s;
  s.outcome = "y";
  s.focal = {"x1"};
  s.cluster = "one";
  EXPECT_THROW(ols_cluster(f, s), EstimationError);
  s.cluster = "household_id";
  s.controls = {"x1"};
  EXPECT_THROW(ols_cluster(f, s), EstimationError);
  s.controls = {};
  s.outcome = "nope";
  EXPECT_THROW(ols_cluster(f, s), DataError);
}

TEST(Regression, WaldFMatchesQuadraticForm) {
  const Frame f = testing_support::random_frame(80, 25, 6);
  RegressionSpec s;
  s.outcome = "y";
  s.focal = {"treated", "x1", "x2"};
  const auto r = ols_cluster(f, s);
  const auto t = wald_f(r, {"x1", "x2"});
  Eigen::Vector2d b(r.coef[2], r.coef[3]);
  const Eigen::Matrix2d v = r.vcov.block(2, 2, 2, 2);
  const double w = b.dot(v.inverse() * b);
  EXPECT_NEAR(t.statistic, w / 2.0, 1e-10);
  EXPECT_EQ(t.df1, 2.0);
  EXPECT_EQ(t.df2, 24.0);
  EXPECT_NEAR(t.p, stats::f_sf(w / 2.0, 2.0, 24.0), 1e-12);
  // One restriction: F equals t squared.
  const auto one = wald_f(r, {"x1"});
  EXPECT_NEAR(one.statistic, std::pow(r.estimate("x1").t, 2), 1e-9);
  EXPECT_NEAR(one.p, r.estimate("x1").p, 1e-9);
}

TEST(Regression, ConfidenceIntervalUsesT) {
  const Frame f = testing_support::random_frame(50, 10, 7);
  RegressionSpec s;
  s.outcome = "y";
  s.focal = {"treated"};
  const auto r = ols_cluster(f, s);
  const auto [lo, hi] = r.confidence_interval("treated");
  const auto e = r.estimate("treated");
  EXPECT_NEAR(hi - e.coef, stats::t_quantile(0.975, 9.0) * e.se, 1e-12);
  EXPECT_NEAR(e.coef - lo, hi - e.coef, 1e-12);
}
