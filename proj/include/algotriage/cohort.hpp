#pragma once

// Synthetic trial cohorts. Households are randomized to algorithm access;
// case workers screen children in from a noisy signal of latent risk, with
// less noise when they consult the score; hospitalization counts are
// mixed-Poisson draws driven by a shared latent severity that a screen-in
// reduces multiplicatively.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "algotriage/error.hpp"
#include "algotriage/random.hpp"
#include "algotriage/stats.hpp"

namespace algotriage::cohort {

inline constexpr int kNumScores = 20;
inline constexpr std::size_t kNumOutcomes = 5;
using OutcomeCounts = std::array<int, kNumOutcomes>;

struct ChildRecord {
  std::int64_t child_id = 0;
  std::int64_t household_id = 0;  // randomization cluster
  std::int64_t referral_id = 0;
  int referral_day = 0;
  bool black = false;
  bool hispanic = false;
  bool female = false;
  bool snap = false;
  bool motherless = false;
  int sibling_count = 1;
  int score = 1;  // ventile, 1..20
  bool treated = false;
  bool score_recorded = false;
  bool screened_in = false;
  bool found_injury = false;
  double decision_minutes = 0.0;
  OutcomeCounts outcomes{};
  OutcomeCounts prior_outcomes{};
  bool removed = false;
  int re_referrals = 0;
  bool switched = false;  // control child later seen with algorithm access
  int rc_stratum = 0;     // sibling-group size for quirk-affected households, else 0

  // Generator internals; never exported.
  double latent_risk = 0.0;
  double severity = 0.0;
};

struct GroupParams {
  double share = 0.0;
  double risk_shift = 0.0;   // shift of latent risk for group members
  double worker_bias = 0.0;  // over-estimate in the workers' prior mean
};

struct DisparityParams {
  GroupParams black{0.04, 0.10, 0.30};
  GroupParams hispanic{0.18, 0.05, 0.10};
  GroupParams female{0.51, 0.05, 0.0};
  GroupParams snap{0.45, 0.15, 0.05};
};

/// Removal probability rising log-linearly from 0.5% at score 1, with the
/// slope set so the score has AUC 0.76 under the default score pmf.
inline std::array<double, kNumScores> default_removal_probs() {
  std::array<double, kNumScores> p{};
  for (int s = 1; s <= kNumScores; ++s) p[s - 1] = 0.005 * std::exp(0.177795 * (s - 1));
  return p;
}

/// 1/20 per ventile with the top bin inflated to 6%.
inline std::array<double, kNumScores> default_score_pmf() {
  std::array<double, kNumScores> p{};
  p.fill(0.94 / 19.0);
  p[kNumScores - 1] = 0.06;
  return p;
}

struct CohortConfig {
  std::size_t n_children = 3431;
  double mean_household_size = 2.24;
  int max_household_size = 8;
  double split_referral_prob = 0.15;  // household listed on two referrals
  double treatment_share = 0.55;
  double screen_in_rate = 0.30;
  std::array<double, kNumScores> score_pmf = default_score_pmf();
  std::array<double, kNumScores> removal_prob_by_score = default_removal_probs();
  std::array<double, kNumOutcomes> control_outcome_means{0.660, 0.210, 0.168, 0.013, 0.020};
  std::array<double, kNumOutcomes> outcome_dispersion{0.05, 0.05, 0.05, 0.05, 0.05};
  double severity_variance = 15.0;
  double household_risk_share = 0.4;
  double score_signal_corr = 0.6;
  double worker_noise_var = 2.0;  // control-arm noise variance, latent-risk units
  double noise_reduction = 2.0;   // tool divides noise variance by this squared
  double itt_effect_sd = -0.061;
  double first_stage = 0.73;
  double prior_outcome_scale = 0.5;
  int outcome_window = 30;  // days excluded after the referral: 0, 30 or 60
  double motherless_share = 0.2;
  bool quirk_enabled = true;
  int n_days = 365;
  int quirk_cutoff_day = 135;
  double switch_share = 0.02;
  DisparityParams disparity_params{};
  std::uint64_t seed = 20201101;

  void validate() const {
    auto prob = [](double v, const char* field) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(field, "must be a probability in [0, 1]");
    };
    prob(treatment_share, "treatment_share");
    prob(screen_in_rate, "screen_in_rate");
    if (screen_in_rate <= 0.0 || screen_in_rate >= 1.0)
      throw ConfigError("screen_in_rate", "must lie strictly inside (0, 1)");
    prob(first_stage, "first_stage");
    prob(motherless_share, "motherless_share");
    prob(switch_share, "switch_share");
    prob(split_referral_prob, "split_referral_prob");
    for (double v : score_pmf) prob(v, "score_pmf");
    const double pmf_total = std::accumulate(score_pmf.begin(), score_pmf.end(), 0.0);
    if (std::abs(pmf_total - 1.0) > 1e-12) throw ConfigError("score_pmf", "must sum to 1");
    for (double v : removal_prob_by_score) prob(v, "removal_prob_by_score");
    for (double v : control_outcome_means)
      if (!(v > 0.0)) throw ConfigError("control_outcome_means", "must be positive");
    for (double v : outcome_dispersion)
      if (!(v >= 0.0)) throw ConfigError("outcome_dispersion", "must be non-negative");
    if (!(severity_variance > 0.0)) throw ConfigError("severity_variance", "must be positive");
    if (!(household_risk_share >= 0.0 && household_risk_share < 1.0))
      throw ConfigError("household_risk_share", "must lie in [0, 1)");
    if (!(score_signal_corr >= 0.0 && score_signal_corr < 1.0))
      throw ConfigError("score_signal_corr", "must lie in [0, 1)");
    if (!(worker_noise_var > 0.0)) throw ConfigError("worker_noise_var", "must be positive");
    if (!(noise_reduction >= 1.0)) throw ConfigError("noise_reduction", "must be >= 1");
    if (!(itt_effect_sd <= 0.0)) throw ConfigError("itt_effect_sd", "must be <= 0");
    if (!(prior_outcome_scale >= 0.0)) throw ConfigError("prior_outcome_scale", "must be >= 0");
    if (outcome_window != 0 && outcome_window != 30 && outcome_window != 60)
      throw ConfigError("outcome_window", "must be 0, 30 or 60");
    if (max_household_size < 1) throw ConfigError("max_household_size", "must be >= 1");
    if (!(mean_household_size >= 1.0 && mean_household_size < (max_household_size + 1) / 2.0))
      throw ConfigError("mean_household_size", "must lie in [1, (max_household_size + 1) / 2)");
    if (n_days < 1) throw ConfigError("n_days", "must be >= 1");
    if (quirk_cutoff_day < 0 || quirk_cutoff_day > n_days)
      throw ConfigError("quirk_cutoff_day", "must lie in [0, n_days]");
    for (const auto* g : {&disparity_params.black, &disparity_params.hispanic,
                          &disparity_params.female, &disparity_params.snap}) {
      prob(g->share, "disparity_params.share");
    }
  }
};

/// Outcome-rate multiplier for the post-referral exclusion window, relative
/// to the default 30-day window.
inline double window_factor(int window) {
  switch (window) {
    case 0: return 1.25;
    case 60: return 0.875;
    default: return 1.0;
  }
}

/// Maps a standard-normal latent to a Gamma(1/V, V) severity (mean 1, var V).
inline double severity_of(double z, double severity_variance) {
  const double shape = 1.0 / severity_variance;
  if (z <= 0.0) {
    const double p = std::max(stats::normal_cdf(z), 1e-300);
    return severity_variance * boost::math::gamma_p_inv(shape, p);
  }
  const double q = std::max(stats::normal_cdf(-z), 1e-300);
  return severity_variance * boost::math::gamma_q_inv(shape, q);
}

/// Area under the ROC curve of `score` for `label` via the Mann-Whitney
/// identity; tied pairs count one half.
inline double auc(std::span<const double> score, std::span<const bool> label) {
  if (score.size() != label.size()) throw DataError("auc: size mismatch");
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && score[order[j]] == score[order[i]]) ++j;
    const double mid_rank = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (label[order[k]]) {
        rank_sum += mid_rank;
        pos += 1.0;
      } else {
        neg += 1.0;
      }
    }
    i = j;
  }
  if (pos == 0.0 || neg == 0.0) throw DomainError("AUC undefined: need both removed and non-removed children");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

inline double score_auc(std::span<const ChildRecord> records) {
  std::vector<double> s(records.size());
  std::unique_ptr<bool[]> y(new bool[records.size()]);
  for (std::size_t i = 0; i < records.size(); ++i) {
    s[i] = records[i].score;
    y[i] = records[i].removed;
  }
  return auc(s, std::span<const bool>(y.get(), records.size()));
}

/// Household-level Bernoulli assignment. With the quirk, children of
/// motherless households first referred on or after `cutoff_day` are drawn
/// individually and any household with a treated child becomes treated, so
/// P(control | k children) = (1 - p)^k. Sets `rc_stratum`.
inline void assign_treatment(std::span<ChildRecord> records, double treatment_share,
                             bool quirk_enabled, int cutoff_day, Engine& rng) {
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    while (j < records.size() && records[j].household_id == records[i].household_id) ++j;
    const auto members = records.subspan(i, j - i);
    const bool quirk = quirk_enabled && members.front().motherless &&
                       members.front().referral_day >= cutoff_day;
    bool treated = false;
    if (quirk) {
      for (std::size_t k = 0; k < members.size(); ++k) treated = bernoulli(rng, treatment_share) || treated;
    } else {
      treated = bernoulli(rng, treatment_share);
    }
    const int stratum = quirk && members.size() > 1 ? static_cast<int>(members.size()) : 0;
    for (auto& c : members) {
      c.treated = treated;
      c.rc_stratum = stratum;
    }
    i = j;
  }
}

inline void assign_treatment(std::span<ChildRecord> records, double treatment_share,
                             bool quirk_enabled, int cutoff_day, std::uint64_t seed) {
  Engine rng = make_engine(seed, 0x61737369676eULL);
  assign_treatment(records, treatment_share, quirk_enabled, cutoff_day, rng);
}

/// Quantities derived from the configuration once, independent of the seed.
struct Calibration {
  std::vector<double> household_size_pmf;  // index k-1
  double household_treat_prob = 0.5;
  std::array<double, kNumScores - 1> score_cuts{};
  double gamma_control = 0.0, gamma_treated = 0.0;
  double threshold_control = 0.0, threshold_treated = 0.0;
  double screen_in_effect = 0.0;  // multiplicative severity reduction of a screen-in
  std::array<double, kNumOutcomes> outcome_rates{};  // at the configured window
  double achieved_itt_sd = 0.0;                      // population ITT implied by the above
};

namespace detail {

struct Cell {
  double prob;
  double mean_risk;
  double bias;
  unsigned flags;  // bit 0 black, 1 hispanic, 2 female, 3 snap
};

inline std::array<const GroupParams*, 4> groups_of(const DisparityParams& d) {
  return {&d.black, &d.hispanic, &d.female, &d.snap};
}

inline std::vector<Cell> group_cells(const DisparityParams& d) {
  const auto gs = groups_of(d);
  std::vector<Cell> cells;
  for (unsigned mask = 0; mask < 16; ++mask) {
    Cell c{1.0, 0.0, 0.0, mask};
    for (unsigned b = 0; b < 4; ++b) {
      const bool on = mask & (1u << b);
      c.prob *= on ? gs[b]->share : 1.0 - gs[b]->share;
      if (on) {
        c.mean_risk += gs[b]->risk_shift;
        c.bias += gs[b]->worker_bias;
      }
    }
    if (c.prob > 0.0) cells.push_back(c);
  }
  return cells;
}

template <typename F>
double bisect(F&& f, double lo, double hi, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

/// P(X <= x) for the group mixture of Normal(loc(cell), sd).
template <typename Loc>
double mixture_cdf(const std::vector<Cell>& cells, Loc&& loc, double sd, double x) {
  double p = 0.0;
  for (const auto& c : cells) p += c.prob * stats::normal_cdf((x - loc(c)) / sd);
  return p;
}

}  // namespace detail

class CohortGenerator {
 public:
  explicit CohortGenerator(CohortConfig config) : config_(std::move(config)) {
    config_.validate();
    calibrate();
  }

  const CohortConfig& config() const noexcept { return config_; }
  const Calibration& calibration() const noexcept { return cal_; }

  std::vector<ChildRecord> generate() const { return generate(config_.seed); }

  std::vector<ChildRecord> generate(std::uint64_t seed) const {
    const auto& c = config_;
    std::vector<ChildRecord> out;
    out.reserve(c.n_children);
    if (c.n_children == 0) return out;
    Engine rng = make_engine(seed, 1);

    std::vector<double> size_cdf(cal_.household_size_pmf.size());
    std::partial_sum(cal_.household_size_pmf.begin(), cal_.household_size_pmf.end(), size_cdf.begin());
    const auto& dp = c.disparity_params;
    const double h_sd = std::sqrt(c.household_risk_share);
    const double e_sd = std::sqrt(1.0 - c.household_risk_share);

    // Household skeleton.
    std::int64_t household = 0, referral = 0;
    while (out.size() < c.n_children) {
      ++household;
      const double u = uniform01(rng) * size_cdf.back();
      auto size = static_cast<std::size_t>(std::upper_bound(size_cdf.begin(), size_cdf.end(), u) - size_cdf.begin()) + 1;
      size = std::min({size, cal_.household_size_pmf.size(), c.n_children - out.size()});
      const int day = static_cast<int>(uniform01(rng) * c.n_days);
      const bool motherless = bernoulli(rng, c.motherless_share);
      const bool black = bernoulli(rng, dp.black.share);
      const bool hispanic = bernoulli(rng, dp.hispanic.share);
      const bool snap = bernoulli(rng, dp.snap.share);
      const double shared = std_normal(rng);
      const bool split = size > 1 && bernoulli(rng, c.split_referral_prob);
      const std::int64_t first_ref = ++referral;
      const std::int64_t second_ref = split ? ++referral : first_ref;
      for (std::size_t k = 0; k < size; ++k) {
        ChildRecord r;
        r.child_id = static_cast<std::int64_t>(out.size()) + 1;
        r.household_id = household;
        r.referral_id = (split && k >= size / 2) ? second_ref : first_ref;
        r.referral_day = day;
        r.motherless = motherless;
        r.sibling_count = static_cast<int>(size);
        r.black = black;
        r.hispanic = hispanic;
        r.snap = snap;
        r.female = bernoulli(rng, dp.female.share);
        double shift = 0.0;
        if (r.black) shift += dp.black.risk_shift;
        if (r.hispanic) shift += dp.hispanic.risk_shift;
        if (r.female) shift += dp.female.risk_shift;
        if (r.snap) shift += dp.snap.risk_shift;
        r.latent_risk = shift + h_sd * shared + e_sd * std_normal(rng);
        out.push_back(r);
      }
    }

    assign_treatment(out, cal_.household_treat_prob, c.quirk_enabled, c.quirk_cutoff_day, rng);

    const double sd_c = std::sqrt(c.worker_noise_var);
    const double sd_t = sd_c / c.noise_reduction;
    const double rho = c.score_signal_corr;
    const double win = window_factor(c.outcome_window);
    for (auto& r : out) {
      if (!r.treated) r.switched = bernoulli(rng, c.switch_share);
      const bool complier = bernoulli(rng, c.first_stage);
      r.score_recorded = r.treated && complier;

      // Algorithm score: ventile of a noisy proxy of latent risk.
      const double proxy = rho * r.latent_risk + std::sqrt(1.0 - rho * rho) * std_normal(rng);
      r.score = 1 + static_cast<int>(std::upper_bound(cal_.score_cuts.begin(), cal_.score_cuts.end(), proxy) -
                                     cal_.score_cuts.begin());
      r.removed = bernoulli(rng, c.removal_prob_by_score[static_cast<std::size_t>(r.score - 1)]);

      // Worker decision from the empirical-Bayes posterior.
      double mean_risk = 0.0, bias = 0.0;
      for (const auto& [flag, g] : {std::pair{r.black, &dp.black}, std::pair{r.hispanic, &dp.hispanic},
                                    std::pair{r.female, &dp.female}, std::pair{r.snap, &dp.snap}}) {
        if (flag) {
          mean_risk += g->risk_shift;
          bias += g->worker_bias;
        }
      }
      const double prior = mean_risk + bias;
      const double noise = std_normal(rng);
      const bool sees_score = r.score_recorded;
      const double gamma = sees_score ? cal_.gamma_treated : cal_.gamma_control;
      const double signal = r.latent_risk + (sees_score ? sd_t : sd_c) * noise;
      const double posterior = (1.0 - gamma) * prior + gamma * signal;
      r.screened_in = posterior >= (sees_score ? cal_.threshold_treated : cal_.threshold_control);

      r.severity = severity_of(r.latent_risk, c.severity_variance);
      const double effective = r.severity * (1.0 - cal_.screen_in_effect * (r.screened_in ? 1.0 : 0.0));
      for (std::size_t j = 0; j < kNumOutcomes; ++j) {
        const double frailty = gamma_mean_var(rng, 1.0, c.outcome_dispersion[j]);
        r.outcomes[j] = static_cast<int>(poisson(rng, cal_.outcome_rates[j] * effective * frailty));
      }
      for (std::size_t j = 0; j < kNumOutcomes; ++j) {
        const double frailty = gamma_mean_var(rng, 1.0, c.outcome_dispersion[j]);
        const double rate = cal_.outcome_rates[j] / win * c.prior_outcome_scale * r.severity * frailty;
        r.prior_outcomes[j] = static_cast<int>(poisson(rng, rate));
      }
      r.found_injury = r.screened_in && bernoulli(rng, 1.0 - std::exp(-0.25 * r.severity));
      r.re_referrals = static_cast<int>(poisson(rng, 0.3 + 0.3 * std::sqrt(effective)));
      r.decision_minutes = std::exp(std::log(25.0) + 0.5 * std_normal(rng));
    }
    return out;
  }

 private:
  void calibrate() {
    const auto& c = config_;
    // Truncated geometric household sizes with the configured mean.
    const int kmax = c.max_household_size;
    auto size_pmf = [kmax](double theta) {
      std::vector<double> p(static_cast<std::size_t>(kmax));
      double total = 0.0;
      for (int k = 1; k <= kmax; ++k) total += p[static_cast<std::size_t>(k - 1)] = std::pow(1.0 - theta, k - 1);
      for (auto& v : p) v /= total;
      return p;
    };
    auto mean_size = [](const std::vector<double>& p) {
      double m = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) m += static_cast<double>(k + 1) * p[k];
      return m;
    };
    if (kmax == 1 || c.mean_household_size <= 1.0) {
      cal_.household_size_pmf = size_pmf(1.0 - 1e-15);
    } else {
      const double theta = detail::bisect(
          [&](double t) { return c.mean_household_size - mean_size(size_pmf(t)); }, 1e-9, 1.0 - 1e-12);
      cal_.household_size_pmf = size_pmf(theta);
    }

    // Household assignment probability giving the configured child-level share.
    const double quirk_share = c.quirk_enabled
        ? c.motherless_share * static_cast<double>(c.n_days - c.quirk_cutoff_day) / c.n_days
        : 0.0;
    auto child_share = [&](double p) {
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < cal_.household_size_pmf.size(); ++k) {
        const double kk = static_cast<double>(k + 1);
        const double pk = cal_.household_size_pmf[k];
        num += pk * kk * ((1.0 - quirk_share) * p + quirk_share * (1.0 - std::pow(1.0 - p, kk)));
        den += pk * kk;
      }
      return num / den;
    };
    cal_.household_treat_prob =
        detail::bisect([&](double p) { return child_share(p) - c.treatment_share; }, 0.0, 1.0);

    // Score cut points on the proxy scale.
    const auto cells = detail::group_cells(c.disparity_params);
    const double rho = c.score_signal_corr;
    double cum = 0.0;
    for (int k = 0; k < kNumScores - 1; ++k) {
      cum += c.score_pmf[static_cast<std::size_t>(k)];
      const double target = cum;
      cal_.score_cuts[static_cast<std::size_t>(k)] = detail::bisect(
          [&](double x) {
            return detail::mixture_cdf(cells, [rho](const detail::Cell& cl) { return rho * cl.mean_risk; }, 1.0, x) - target;
          },
          -40.0, 40.0);
    }

    // Screen-in thresholds: the posterior is Normal(mean + (1-gamma) bias, gamma).
    cal_.gamma_control = 1.0 / (1.0 + c.worker_noise_var);
    cal_.gamma_treated = 1.0 / (1.0 + c.worker_noise_var / (c.noise_reduction * c.noise_reduction));
    auto threshold = [&](double gamma) {
      return detail::bisect(
          [&](double x) {
            const double below = detail::mixture_cdf(
                cells, [gamma](const detail::Cell& cl) { return cl.mean_risk + (1.0 - gamma) * cl.bias; },
                std::sqrt(gamma), x);
            return below - (1.0 - c.screen_in_rate);
          },
          -40.0, 40.0);
    };
    cal_.threshold_control = threshold(cal_.gamma_control);
    cal_.threshold_treated = threshold(cal_.gamma_treated);

    calibrate_outcomes(cells);
  }

  // Solves for the screen-in effect that yields the configured ITT on the
  // equal-weight index. Severity moments by arm are one-dimensional integrals
  // over latent risk (trapezoid rule), and the counts are mixed Poisson, so
  // the population ITT is available in closed form given the effect.
  void calibrate_outcomes(const std::vector<detail::Cell>& cells) {
    const auto& c = config_;
    const double sd_c = std::sqrt(c.worker_noise_var);
    const double sd_t = sd_c / c.noise_reduction;
    double lo_mean = 0.0, hi_mean = 0.0;
    for (const auto& cl : cells) {
      lo_mean = std::min(lo_mean, cl.mean_risk);
      hi_mean = std::max(hi_mean, cl.mean_risk);
    }
    constexpr double kStep = 1e-3;
    const double z_lo = lo_mean - 10.0, z_hi = hi_mean + 10.0;
    const auto points = static_cast<std::size_t>((z_hi - z_lo) / kStep) + 1;
    // Integrals of s and s^2 against the density, and against the density
    // times P(screen-in) in the control arm and in the treated arm.
    double s1 = 0.0, s2 = 0.0, s1_d0 = 0.0, s2_d0 = 0.0, s1_dt = 0.0;
    auto p_screen = [&](const detail::Cell& cl, double z, double gamma, double sd, double tau) {
      const double prior = cl.mean_risk + cl.bias;
      return stats::normal_cdf(((1.0 - gamma) * prior + gamma * z - tau) / (gamma * sd));
    };
    for (std::size_t i = 0; i < points; ++i) {
      const double z = z_lo + kStep * static_cast<double>(i);
      const double w = (i == 0 || i + 1 == points ? 0.5 : 1.0) * kStep;
      const double sev = severity_of(z, c.severity_variance);
      double dens = 0.0, d0 = 0.0, dt = 0.0;
      for (const auto& cl : cells) {
        const double f = cl.prob * stats::normal_pdf(z - cl.mean_risk);
        const double pc = p_screen(cl, z, cal_.gamma_control, sd_c, cal_.threshold_control);
        const double pt = p_screen(cl, z, cal_.gamma_treated, sd_t, cal_.threshold_treated);
        dens += f;
        d0 += f * pc;
        dt += f * (c.first_stage * pt + (1.0 - c.first_stage) * pc);
      }
      s1 += w * dens * sev;
      s2 += w * dens * sev * sev;
      s1_d0 += w * d0 * sev;
      s2_d0 += w * d0 * sev * sev;
      s1_dt += w * dt * sev;
    }

    const double win = window_factor(c.outcome_window);
    struct Solution {
      std::array<double, kNumOutcomes> rates;
      double itt;
    };
    auto evaluate = [&](double kappa) {
      const double e1 = s1 - kappa * s1_d0;
      const double e2 = s2 - (2.0 * kappa - kappa * kappa) * s2_d0;
      const double et = s1 - kappa * s1_dt;
      Solution s{};
      std::array<double, kNumOutcomes> sd{};
      for (std::size_t j = 0; j < kNumOutcomes; ++j) {
        s.rates[j] = c.control_outcome_means[j] / e1 * win;
        const double lam = s.rates[j];
        sd[j] = std::sqrt(lam * e1 + lam * lam * ((1.0 + c.outcome_dispersion[j]) * e2 - e1 * e1));
      }
      const double var_sev = e2 - e1 * e1;
      double var_avg = 0.0, shift = 0.0;
      for (std::size_t j = 0; j < kNumOutcomes; ++j) {
        shift += s.rates[j] * (et - e1) / sd[j];
        for (std::size_t l = 0; l < kNumOutcomes; ++l) {
          const double cov = j == l ? sd[j] * sd[j] : s.rates[j] * s.rates[l] * var_sev;
          var_avg += cov / (sd[j] * sd[l]);
        }
      }
      const double k = static_cast<double>(kNumOutcomes);
      s.itt = (shift / k) / std::sqrt(var_avg / (k * k));
      return s;
    };

    constexpr double kMaxEffect = 0.999;
    double kappa = 0.0;
    if (c.itt_effect_sd < 0.0) {
      if (evaluate(kMaxEffect).itt > c.itt_effect_sd) {
        throw ConfigError("itt_effect_sd",
                          "not attainable through reallocation of screen-ins with this noise configuration");
      }
      kappa = detail::bisect([&](double k) { return c.itt_effect_sd - evaluate(k).itt; }, 0.0, kMaxEffect, 80);
    }
    const auto sol = evaluate(kappa);
    cal_.screen_in_effect = kappa;
    cal_.outcome_rates = sol.rates;
    cal_.achieved_itt_sd = sol.itt;
  }

  CohortConfig config_;
  Calibration cal_;
};

inline std::vector<ChildRecord> generate_cohort(const CohortConfig& config) {
  return CohortGenerator(config).generate();
}

}  // namespace algotriage::cohort
