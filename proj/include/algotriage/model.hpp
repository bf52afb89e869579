#pragma once

// Decision model of case-worker risk assessment: workers see a noisy signal
// m = r + eps of a child's true risk r and shrink it toward a prior mean.
// Algorithm access divides the noise variance by a^2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "algotriage/error.hpp"
#include "algotriage/random.hpp"
#include "algotriage/stats.hpp"

namespace algotriage::model {

/// Signal reliability var_r / (var_r + var_eps).
inline double reliability(double var_r, double var_eps) {
  if (!(var_r > 0.0) || !(var_eps > 0.0)) {
    throw DomainError("reliability: variances must be positive");
  }
  return var_r / (var_r + var_eps);
}

/// Empirical-Bayes posterior mean (1 - gamma) * alpha + gamma * m.
inline double posterior_risk(double alpha, double gamma, double m) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw DomainError("posterior_risk: gamma must lie in [0, 1]");
  }
  return (1.0 - gamma) * alpha + gamma * m;
}

/// Harm from an under-estimate of risk: p^2 when p >= 0, zero otherwise.
inline double harm(double p) { return p >= 0.0 ? p * p : 0.0; }

/// E[p^2 1(p > 0)] for p ~ Normal(0, sigma_p_sq).
inline double expected_harm(double sigma_p_sq) {
  if (sigma_p_sq < 0.0) throw DomainError("expected_harm: variance must be non-negative");
  return sigma_p_sq / 2.0;
}

struct RiskGroup {
  std::string label;
  double share = 1.0;
  double mean_r = 5.0;
  double var_r = 1.0;
  double alpha = 5.0;  // worker's prior mean for the group
};

struct ModelParams {
  // Single-population form, used when `groups` is empty.
  double alpha = 5.0;
  double mean_r = 5.0;
  double var_r = 1.0;
  double var_eps_c = 1.0;  // control-arm noise variance
  double a = 1.0;          // noise-reduction factor of the tool
  std::vector<RiskGroup> groups;

  /// Groups with `mean_r = 5 sd(r)` and an unbiased prior.
  static ModelParams with_groups(std::vector<std::pair<std::string, double>> var_by_group,
                                 double var_eps_c, double a) {
    ModelParams p;
    p.var_eps_c = var_eps_c;
    p.a = a;
    const double share = 1.0 / static_cast<double>(var_by_group.size());
    for (auto& [label, v] : var_by_group) {
      const double mu = 5.0 * std::sqrt(v);
      p.groups.push_back({label, share, mu, v, mu});
    }
    return p;
  }

  std::vector<RiskGroup> effective_groups() const {
    if (!groups.empty()) return groups;
    return {RiskGroup{"all", 1.0, mean_r, var_r, alpha}};
  }

  void validate() const {
    if (!(var_eps_c > 0.0)) throw ConfigError("var_eps_c", "must be positive");
    if (!(a >= 1.0)) throw ConfigError("a", "must be >= 1");
    double total = 0.0;
    for (const auto& g : effective_groups()) {
      if (!(g.var_r > 0.0)) throw ConfigError("var_r", "must be positive for group " + g.label);
      if (!(g.share >= 0.0)) throw ConfigError("share", "must be non-negative");
      total += g.share;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("groups", "shares must sum to 1");
  }
};

/// Variance of the prediction error p = r - E[r|m] for noise reduction `a`.
inline double var_prediction_error(double var_r, double var_eps_c, double a) {
  if (!(var_r > 0.0) || !(var_eps_c > 0.0) || !(a >= 1.0)) {
    throw DomainError("var_prediction_error: invalid parameters");
  }
  return var_eps_c * var_r / (a * a * var_r + var_eps_c);
}

inline double var_prediction_error(const ModelParams& params) {
  params.validate();
  double v = 0.0;
  for (const auto& g : params.effective_groups()) {
    v += g.share * var_prediction_error(g.var_r, params.var_eps_c, params.a);
  }
  return v;
}

struct AssessmentSample {
  std::vector<double> r, m, estimate, p, harm;
  std::vector<int> group;

  std::size_t size() const { return r.size(); }
};

/// Draw `n` children: r ~ N(mean_r, var_r), eps ~ N(0, var_eps_c / a^2),
/// estimate = posterior_risk(alpha, gamma, m), p = r - estimate.
inline AssessmentSample simulate_assessments(const ModelParams& params, std::size_t n,
                                             std::uint64_t seed) {
  if (n < 1) throw DomainError("simulate_assessments: n must be >= 1");
  params.validate();
  const auto groups = params.effective_groups();
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& g : groups) cumulative.push_back(acc += g.share);

  const double var_eps = params.var_eps_c / (params.a * params.a);
  const double sd_eps = std::sqrt(var_eps);
  Engine rng = make_engine(seed, 0x6d6f64656cULL);

  AssessmentSample out;
  for (auto* v : {&out.r, &out.m, &out.estimate, &out.p, &out.harm}) v->resize(n);
  out.group.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int gi = 0;
    if (groups.size() > 1) {
      const double u = uniform01(rng) * acc;
      gi = static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                            cumulative.begin());
      gi = std::min(gi, static_cast<int>(groups.size()) - 1);
    }
    const RiskGroup& g = groups[static_cast<std::size_t>(gi)];
    const double r = g.mean_r + std::sqrt(g.var_r) * std_normal(rng);
    const double m = r + sd_eps * std_normal(rng);
    const double gamma = g.var_r / (g.var_r + var_eps);
    const double est = posterior_risk(g.alpha, gamma, m);
    out.group[i] = gi;
    out.r[i] = r;
    out.m[i] = m;
    out.estimate[i] = est;
    out.p[i] = r - est;
    out.harm[i] = harm(out.p[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Proposition verification

enum class CheckStatus { pass, fail, vacuous };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::vacuous: return "vacuous";
  }
  return "?";
}

struct Quantity {
  std::string name;
  double estimate = 0.0;
  double mcse = 0.0;
  std::optional<double> closed_form;

  bool matches_closed_form(double z = 3.0) const {
    return !closed_form || std::abs(estimate - *closed_form) <= z * mcse;
  }
};

/// One inequality claim. `margin` is arranged so the claim reads margin < 0.
struct PropositionCheck {
  std::string id;
  std::string claim;
  std::vector<Quantity> quantities;
  double margin = 0.0;
  double margin_mcse = 0.0;
  bool vacuous = false;
  CheckStatus status = CheckStatus::fail;
  bool equality_holds = false;  // meaningful when vacuous
};

/// Pass iff the margin is below zero by more than `z` standard errors and
/// every closed form is matched within `z` standard errors.
inline CheckStatus evaluate_check(const PropositionCheck& c, double z = 3.0) {
  if (c.vacuous) return CheckStatus::vacuous;
  const bool closed_ok = std::all_of(c.quantities.begin(), c.quantities.end(),
                                     [z](const Quantity& q) { return q.matches_closed_form(z); });
  return (c.margin < -z * c.margin_mcse && closed_ok) ? CheckStatus::pass : CheckStatus::fail;
}

struct PropositionReport {
  std::vector<PropositionCheck> checks;
  std::size_t n_per_arm = 0;
  std::uint64_t seed = 0;

  bool all_pass_or_vacuous() const {
    return std::none_of(checks.begin(), checks.end(),
                        [](const auto& c) { return c.status == CheckStatus::fail; });
  }
  const PropositionCheck* find(const std::string& id) const {
    for (const auto& c : checks)
      if (c.id == id) return &c;
    return nullptr;
  }
};

namespace detail {

struct ArmMoments {
  stats::BatchEstimate var_p, mean_p, mean_h;
};

inline ArmMoments arm_moments(const AssessmentSample& s, std::size_t n_batches) {
  const std::span<const double> p(s.p);
  const std::span<const double> h(s.harm);
  ArmMoments m;
  m.var_p = stats::batch_estimate(s.size(), n_batches, [&](std::size_t b, std::size_t e) {
    return stats::variance(p.subspan(b, e - b));
  });
  m.mean_p = stats::batch_estimate(s.size(), n_batches, [&](std::size_t b, std::size_t e) {
    return stats::mean(p.subspan(b, e - b));
  });
  m.mean_h = stats::batch_estimate(s.size(), n_batches, [&](std::size_t b, std::size_t e) {
    return stats::mean(h.subspan(b, e - b));
  });
  return m;
}

inline ModelParams single_group(const ModelParams& base, const RiskGroup& g, double a,
                                bool unbiased) {
  ModelParams p;
  p.var_eps_c = base.var_eps_c;
  p.a = a;
  p.mean_r = g.mean_r;
  p.var_r = g.var_r;
  p.alpha = unbiased ? g.mean_r : g.alpha;
  return p;
}

inline double hypot_se(double a, double b) { return std::sqrt(a * a + b * b); }

}  // namespace detail

/// Monte Carlo check of the accuracy, harm and bias-correction claims.
/// Each arm draws `n` children per group; MCSE by batching.
inline PropositionReport verify_propositions(const ModelParams& params, std::size_t n,
                                             std::uint64_t seed, std::size_t n_batches = 100) {
  params.validate();
  const auto groups = params.effective_groups();
  const bool degenerate = params.a == 1.0;

  struct GroupArms {
    detail::ArmMoments control, treated;
    double vpe_c, vpe_t;
  };
  std::vector<GroupArms> arms;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    const auto sc = simulate_assessments(detail::single_group(params, g, 1.0, true), n,
                                         derive_seed(seed, 2 * gi));
    const auto st = simulate_assessments(detail::single_group(params, g, params.a, true), n,
                                         derive_seed(seed, 2 * gi + 1));
    arms.push_back({detail::arm_moments(sc, n_batches), detail::arm_moments(st, n_batches),
                    var_prediction_error(g.var_r, params.var_eps_c, 1.0),
                    var_prediction_error(g.var_r, params.var_eps_c, params.a)});
  }

  PropositionReport report;
  report.n_per_arm = n;
  report.seed = seed;

  auto finish = [&](PropositionCheck c) {
    c.vacuous = c.vacuous || degenerate;
    c.equality_holds = std::abs(c.margin) <= 3.0 * c.margin_mcse;
    c.status = evaluate_check(c);
    report.checks.push_back(std::move(c));
  };

  // Pooled accuracy and harm (unbiased priors, centered errors).
  auto pooled = [&](auto pick_est, auto pick_cf, bool treated) {
    Quantity q;
    double var_mcse = 0.0;
    double cf = 0.0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& arm = treated ? arms[gi].treated : arms[gi].control;
      const stats::BatchEstimate e = pick_est(arm);
      q.estimate += groups[gi].share * e.value;
      var_mcse += std::pow(groups[gi].share * e.mcse, 2);
      cf += groups[gi].share * pick_cf(arms[gi], treated);
    }
    q.mcse = std::sqrt(var_mcse);
    q.closed_form = cf;
    return q;
  };
  auto var_est = [](const detail::ArmMoments& m) { return m.var_p; };
  auto harm_est = [](const detail::ArmMoments& m) { return m.mean_h; };
  auto var_cf = [](const GroupArms& g, bool t) { return t ? g.vpe_t : g.vpe_c; };
  auto harm_cf = [](const GroupArms& g, bool t) { return expected_harm(t ? g.vpe_t : g.vpe_c); };

  for (int which = 0; which < 2; ++which) {
    const bool is_harm = which == 1;
    PropositionCheck c;
    c.id = is_harm ? "2.1" : "1.1";
    c.claim = is_harm ? "E[H|T] < E[H|C]" : "V(p|T) < V(p|C)";
    Quantity qt = is_harm ? pooled(harm_est, harm_cf, true) : pooled(var_est, var_cf, true);
    Quantity qc = is_harm ? pooled(harm_est, harm_cf, false) : pooled(var_est, var_cf, false);
    qt.name = is_harm ? "E[H|T]" : "V(p|T)";
    qc.name = is_harm ? "E[H|C]" : "V(p|C)";
    c.margin = qt.estimate - qc.estimate;
    c.margin_mcse = detail::hypot_se(qt.mcse, qc.mcse);
    c.quantities = {qt, qc};
    finish(std::move(c));
  }

  // Group ordering: larger var_r gains more.
  std::size_t hi = 0, lo = 0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    if (groups[gi].var_r > groups[hi].var_r) hi = gi;
    if (groups[gi].var_r < groups[lo].var_r) lo = gi;
  }
  const bool distinct = groups[hi].var_r > groups[lo].var_r;
  for (int which = 0; which < 2; ++which) {
    const bool is_harm = which == 1;
    PropositionCheck c;
    c.id = is_harm ? "2.2" : "1.2";
    c.claim = is_harm ? "harm reduction larger for the higher-variance group"
                      : "V(p) reduction larger for the higher-variance group";
    auto change = [&](std::size_t gi) {
      const auto& g = arms[gi];
      const auto t = is_harm ? g.treated.mean_h : g.treated.var_p;
      const auto k = is_harm ? g.control.mean_h : g.control.var_p;
      const double cf = is_harm ? expected_harm(g.vpe_t) - expected_harm(g.vpe_c)
                                : g.vpe_t - g.vpe_c;
      return Quantity{"change[" + groups[gi].label + "]", t.value - k.value,
                      detail::hypot_se(t.mcse, k.mcse), cf};
    };
    if (distinct) {
      const Quantity qh = change(hi);
      const Quantity ql = change(lo);
      c.quantities = {qh, ql};
      c.margin = qh.estimate - ql.estimate;
      c.margin_mcse = detail::hypot_se(qh.mcse, ql.mcse);
    } else {
      c.vacuous = true;
    }
    finish(std::move(c));
  }

  // Biased priors: treatment shrinks the mean error toward zero.
  {
    PropositionCheck c;
    c.id = "3";
    c.claim = "0 > E[p|T] > E[p|C] for over-estimated groups; gains grow with |m - alpha|";
    std::optional<std::size_t> biased;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      if (groups[gi].alpha > groups[gi].mean_r &&
          (!biased || groups[gi].alpha - groups[gi].mean_r >
                          groups[*biased].alpha - groups[*biased].mean_r)) {
        biased = gi;
      }
    }
    const RiskGroup& g = groups[biased.value_or(0)];
    // Paired draws: same r and standardized noise in both arms.
    Engine rng = make_engine(seed, 0x70726f7033ULL);
    const double sd_c = std::sqrt(params.var_eps_c);
    const double gamma_c = reliability(g.var_r, params.var_eps_c);
    const double gamma_t = reliability(g.var_r, params.var_eps_c / (params.a * params.a));
    std::vector<double> pc(n), pt(n), dist(n), gain(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = g.mean_r + std::sqrt(g.var_r) * std_normal(rng);
      const double eps_c = sd_c * std_normal(rng);
      const double mc = r + eps_c;
      const double mt = r + eps_c / params.a;
      pc[i] = r - posterior_risk(g.alpha, gamma_c, mc);
      pt[i] = r - posterior_risk(g.alpha, gamma_t, mt);
      dist[i] = std::abs(mc - g.alpha);
      gain[i] = std::abs(pc[i]) - std::abs(pt[i]);
    }
    auto mean_of = [&](const std::vector<double>& v) {
      return stats::batch_estimate(n, n_batches, [&](std::size_t b, std::size_t e) {
        return stats::mean(std::span<const double>(v).subspan(b, e - b));
      });
    };
    const auto et = mean_of(pt);
    const auto ec = mean_of(pc);
    Quantity qt{"E[p|T]", et.value, et.mcse, (1.0 - gamma_t) * (g.mean_r - g.alpha)};
    Quantity qc{"E[p|C]", ec.value, ec.mcse, (1.0 - gamma_c) * (g.mean_r - g.alpha)};

    // Error reduction in the top vs bottom quartile of |m - alpha|.
    const double q25 = stats::quantile(dist, 0.25);
    const double q75 = stats::quantile(dist, 0.75);
    auto quartile_gain = [&](bool top) {
      return stats::batch_estimate(n, n_batches, [&](std::size_t b, std::size_t e) {
        double s = 0.0;
        std::size_t k = 0;
        for (std::size_t i = b; i < e; ++i) {
          if (top ? dist[i] >= q75 : dist[i] <= q25) {
            s += gain[i];
            ++k;
          }
        }
        return k ? s / static_cast<double>(k) : 0.0;
      });
    };
    const auto gtop = quartile_gain(true);
    const auto gbot = quartile_gain(false);
    Quantity qtop{"gain[|m-alpha| top quartile]", gtop.value, gtop.mcse, std::nullopt};
    Quantity qbot{"gain[|m-alpha| bottom quartile]", gbot.value, gbot.mcse, std::nullopt};
    c.quantities = {qt, qc, qtop, qbot};

    // Three strict claims folded into one margin: the worst of
    // E[p|T] < 0, E[p|C] < E[p|T], gain_bottom < gain_top (in MCSE units).
    struct Part { double m, se; };
    const Part parts[] = {{qt.estimate, qt.mcse},
                          {qc.estimate - qt.estimate, detail::hypot_se(qc.mcse, qt.mcse)},
                          {gbot.value - gtop.value, detail::hypot_se(gbot.mcse, gtop.mcse)}};
    auto z_of = [](const Part& p) {
      if (p.se > 0.0) return p.m / p.se;
      return p.m > 0.0 ? HUGE_VAL : (p.m < 0.0 ? -HUGE_VAL : 0.0);
    };
    const Part* worst = &parts[0];
    for (const auto& p : parts) {
      if (z_of(p) > z_of(*worst)) worst = &p;
    }
    c.margin = worst->m;
    c.margin_mcse = worst->se;
    if (!biased) {
      c.vacuous = true;
      // Unbiased prior: report how far E[p] sits from zero.
      c.margin = qt.estimate;
      c.margin_mcse = qt.mcse;
    }
    finish(std::move(c));
  }
  return report;
}

}  // namespace algotriage::model
