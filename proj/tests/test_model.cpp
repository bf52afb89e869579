#include <gtest/gtest.h>

#include <cmath>

#include "algotriage/model.hpp"
#include "algotriage/random.hpp"
#include "algotriage/stats.hpp"

using namespace algotriage;

TEST(Model, ReliabilityAndPosterior) {
  EXPECT_DOUBLE_EQ(model::reliability(1.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(model::reliability(3.0, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(model::posterior_risk(5.0, 0.5, 7.0), 6.0);
  EXPECT_DOUBLE_EQ(model::posterior_risk(5.0, 0.0, 7.0), 5.0);
  EXPECT_DOUBLE_EQ(model::posterior_risk(5.0, 1.0, 7.0), 7.0);
}

TEST(Model, HarmIsOneSidedSquare) {
  EXPECT_EQ(model::harm(-2.0), 0.0);
  EXPECT_EQ(model::harm(0.0), 0.0);
  EXPECT_DOUBLE_EQ(model::harm(1.5), 2.25);
  EXPECT_THROW(model::expected_harm(-1.0), DomainError);
}

TEST(Model, ExpectedHarmMatchesSimulation) {
  // Monte Carlo oracle: E[max(p,0)^2] for p ~ N(0, s2) is s2 / 2.
  for (double s2 : {0.3, 1.0, 2.5}) {
    Engine rng = make_engine(5, static_cast<std::uint64_t>(s2 * 10));
    const int n = 400000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double p = std::sqrt(s2) * std_normal(rng);
      const double h = p > 0 ? p * p : 0.0;
      sum += h;
      sumsq += h * h;
    }
    const double m = sum / n;
    const double se = std::sqrt((sumsq / n - m * m) / n);
    EXPECT_NEAR(model::expected_harm(s2), m, 4 * se);
  }
}

TEST(Model, PredictionErrorVarianceDirectForm) {
  for (double vr : {0.2, 1.0, 5.0})
    for (double ve : {0.5, 1.0, 3.0})
      for (double a : {1.0, 1.7, 4.0}) {
        const double v_eps = ve / (a * a);
        const double g = vr / (vr + v_eps);
        const double direct = (1 - g) * (1 - g) * vr + g * g * v_eps;
        EXPECT_NEAR(model::var_prediction_error(vr, ve, a), direct, 1e-12);
      }
  EXPECT_THROW(model::var_prediction_error(0.0, 1.0, 1.0), DomainError);
  EXPECT_THROW(model::var_prediction_error(1.0, 1.0, 0.5), DomainError);
}

TEST(Model, AccuracyRisesWithNoiseReduction) {
  double prev = HUGE_VAL;
  for (double a = 1.0; a <= 6.0; a += 0.5) {
    const double v = model::var_prediction_error(2.0, 1.0, a);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Model, ValidateRejectsBadParams) {
  model::ModelParams p;
  p.var_eps_c = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.a = 0.9;
  EXPECT_THROW(p.validate(), ConfigError);
  p = model::ModelParams::with_groups({{"B", 2}, {"W", 1}}, 1.0, 2.0);
  p.groups[0].share = 0.7;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Model, SimulationIsSeededAndMatchesClosedForm) {
  model::ModelParams p;
  p.var_r = 2.0;
  p.var_eps_c = 1.0;
  p.a = 2.0;
  const auto s1 = model::simulate_assessments(p, 200000, 9);
  const auto s2 = model::simulate_assessments(p, 200000, 9);
  EXPECT_EQ(s1.p, s2.p);
  const double closed = model::var_prediction_error(2.0, 1.0, 2.0);
  EXPECT_NEAR(stats::variance(s1.p), closed, 0.02 * closed);
  EXPECT_NEAR(stats::mean(s1.p), 0.0, 0.01);
}

TEST(Model, PropositionsPassWithDefaults) {
  auto p = model::ModelParams::with_groups({{"B", 2.0}, {"W", 1.0}}, 1.0, 2.0);
  const auto rep = model::verify_propositions(p, 200000, 3, 100);
  for (const char* id : {"1.1", "1.2", "2.1", "2.2"}) {
    ASSERT_NE(rep.find(id), nullptr) << id;
    EXPECT_EQ(rep.find(id)->status, model::CheckStatus::pass) << id;
  }
  // Unbiased priors leave the bias claim without a subject.
  EXPECT_EQ(rep.find("3")->status, model::CheckStatus::vacuous);
  EXPECT_TRUE(rep.all_pass_or_vacuous());
}

TEST(Model, NoToolMakesStrictClaimsVacuous) {
  auto p = model::ModelParams::with_groups({{"B", 2.0}, {"W", 1.0}}, 1.0, 1.0);
  const auto rep = model::verify_propositions(p, 100000, 4, 100);
  for (const auto& c : rep.checks) {
    EXPECT_EQ(c.status, model::CheckStatus::vacuous) << c.id;
    EXPECT_TRUE(c.equality_holds) << c.id;
  }
  EXPECT_TRUE(rep.all_pass_or_vacuous());
}

TEST(Model, NegligibleGainIsNotAPass) {
  auto p = model::ModelParams::with_groups({{"B", 2.0}, {"W", 1.0}}, 1.0, 1.0001);
  const auto rep = model::verify_propositions(p, 20000, 4, 100);
  EXPECT_EQ(rep.find("1.1")->status, model::CheckStatus::fail);
  EXPECT_FALSE(rep.all_pass_or_vacuous());
}

TEST(Model, BiasClaimUnderOverestimation) {
  auto p = model::ModelParams::with_groups({{"B", 2.0}, {"W", 1.0}}, 1.0, 2.0);
  p.groups[1].alpha = p.groups[1].mean_r + 1.0;
  const auto rep = model::verify_propositions(p, 200000, 6, 100);
  const auto* c = rep.find("3");
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(c->status, model::CheckStatus::pass);
  // Closed forms for the mean errors are carried with the quantities.
  for (const auto& q : c->quantities)
    if (q.closed_form) EXPECT_NEAR(q.estimate, *q.closed_form, 4 * q.mcse) << q.name;
}
