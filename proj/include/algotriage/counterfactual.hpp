#pragma once

// Counterfactual decision regimes on observed trial data: algorithm-only and
// oracle screening at a fixed rate, the mandate threshold, best-case harm
// bounds, marginal reliance and disparity tables, and MVPF arithmetic.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "algotriage/error.hpp"
#include "algotriage/frame.hpp"
#include "algotriage/random.hpp"
#include "algotriage/stats.hpp"

namespace algotriage::counterfactual {

enum class RuleKind { human_only, human_plus_algo, algo_only, oracle, mandate };

inline RuleKind parse_rule(std::string_view s) {
  if (s == "human_only") return RuleKind::human_only;
  if (s == "human_plus_algo") return RuleKind::human_plus_algo;
  if (s == "algo_only") return RuleKind::algo_only;
  if (s == "oracle") return RuleKind::oracle;
  if (s == "mandate") return RuleKind::mandate;
  throw ConfigError("rule", "unknown rule '" + std::string(s) + "'");
}

inline std::string_view to_string(RuleKind k) {
  switch (k) {
    case RuleKind::human_only: return "human_only";
    case RuleKind::human_plus_algo: return "human_plus_algo";
    case RuleKind::algo_only: return "algo_only";
    case RuleKind::oracle: return "oracle";
    case RuleKind::mandate: return "mandate";
  }
  return "?";
}

struct DecisionRule {
  RuleKind kind = RuleKind::algo_only;
  double rate = 0.30;
  int threshold = 20;
  std::string score_column = "score";
  std::string harm_column = "harm_index";

  void validate() const {
    if ((kind == RuleKind::algo_only || kind == RuleKind::oracle) && !(rate > 0.0 && rate < 1.0))
      throw ConfigError("rate", "must lie in (0, 1)");
    if (kind == RuleKind::mandate && (threshold < 1 || threshold > 20))
      throw ConfigError("threshold", "must lie in [1, 20]");
  }
};

/// ceil(rate * N), guarded against floating-point overshoot.
inline std::size_t capacity(double rate, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9)));
}

namespace detail {

/// Indices sorted by `key` descending; equal keys ordered by seeded uniform draws.
inline std::vector<std::size_t> ranked(const std::vector<double>& key, std::uint64_t seed) {
  Engine rng = make_engine(seed, 0x7469657321ULL);
  std::vector<double> jitter(key.size());
  for (auto& j : jitter) j = uniform01(rng);
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return key[a] > key[b];
    if (jitter[a] != jitter[b]) return jitter[a] < jitter[b];
    return a < b;
  });
  return order;
}

inline std::vector<bool> observed(const Frame& f) {
  const auto& si = f.col("screened_in");
  std::vector<bool> d(si.size());
  for (std::size_t i = 0; i < si.size(); ++i) d[i] = si[i] != 0.0;
  return d;
}

}  // namespace detail

inline std::vector<bool> apply_rule(const Frame& f, const DecisionRule& rule, std::uint64_t seed) {
  rule.validate();
  switch (rule.kind) {
    case RuleKind::human_only:
    case RuleKind::human_plus_algo:
      return detail::observed(f);
    case RuleKind::algo_only:
    case RuleKind::oracle: {
      const auto& key = f.col(rule.kind == RuleKind::algo_only ? rule.score_column : rule.harm_column);
      const auto order = detail::ranked(key, seed);
      std::vector<bool> d(f.rows(), false);
      const std::size_t k = capacity(rule.rate, f.rows());
      for (std::size_t i = 0; i < k; ++i) d[order[i]] = true;
      return d;
    }
    case RuleKind::mandate: {
      auto d = detail::observed(f);
      const auto& s = f.col(rule.score_column);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = d[i] || s[i] >= rule.threshold;
      return d;
    }
  }
  return {};
}

struct GridCell2x2 {
  // [human][algo], 1 = screened in
  std::size_t count[2][2] = {{0, 0}, {0, 0}};
  std::vector<double> outcomes[2][2];
};

inline GridCell2x2 cross_tab(const std::vector<bool>& human, const std::vector<bool>& algo,
                             const std::vector<double>& y) {
  GridCell2x2 g;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ++g.count[human[i]][algo[i]];
    g.outcomes[human[i]][algo[i]].push_back(y[i]);
  }
  return g;
}

struct BoundCurve {
  std::vector<double> r_grid;
  double human_only_mean = 0.0;
  std::vector<double> algo_mean;    // rule applied at the same rate
  std::vector<double> oracle_mean;  // best case over all selections of the same size
  double harm_floor = 0.0;
  GridCell2x2 cells;  // human x rule
  std::size_t n = 0;
};

inline std::vector<double> default_r_grid() {
  std::vector<double> g(41);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.1 * static_cast<double>(i);
  return g;
}

namespace detail {

inline double imputed_mean(const std::vector<double>& y, const std::vector<bool>& human,
                           const std::vector<bool>& chosen, double r, double floor) {
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += (!human[i] && chosen[i]) ? std::max(y[i] - r, floor) : y[i];
  return sum / static_cast<double>(y.size());
}

}  // namespace detail

/// Mean harm when the rule replaces human decisions. A child screened in by
/// the rule but not by the worker is credited max(y - R, floor); every other
/// child keeps the observed outcome. The oracle series screens in the
/// highest-harm children among those the worker screened out, which is the
/// most favorable selection of the same size for every R.
inline BoundCurve bound_algo_only(const Frame& control, const DecisionRule& rule, const std::vector<double>& r_grid,
                                  double harm_floor, std::uint64_t seed) {
  const auto& y = control.col(rule.harm_column);
  if (y.empty()) throw DataError("bound_algo_only: empty sample");
  const double ymin = *std::min_element(y.begin(), y.end());
  if (harm_floor > ymin) throw ConfigError("harm_floor", "exceeds the minimum observed harm");
  for (double r : r_grid)
    if (!(r >= 0.0)) throw ConfigError("r_grid", "values must be >= 0");
  const auto human = detail::observed(control);
  const auto chosen = apply_rule(control, rule, seed);
  const std::size_t k = static_cast<std::size_t>(std::count(chosen.begin(), chosen.end(), true));

  // Oracle: top-k by harm with human-out children first.
  std::vector<double> key(y.size());
  const double span = *std::max_element(y.begin(), y.end()) - ymin + 1.0;
  for (std::size_t i = 0; i < y.size(); ++i) key[i] = y[i] + (human[i] ? -2.0 * span : 0.0);
  const auto order = detail::ranked(key, seed);
  std::vector<bool> oracle(y.size(), false);
  for (std::size_t i = 0; i < k; ++i) oracle[order[i]] = true;

  BoundCurve c;
  c.r_grid = r_grid;
  c.harm_floor = harm_floor;
  c.n = y.size();
  c.cells = cross_tab(human, chosen, y);
  c.human_only_mean = stats::mean(y);
  for (double r : r_grid) {
    c.algo_mean.push_back(detail::imputed_mean(y, human, chosen, r, harm_floor));
    c.oracle_mean.push_back(detail::imputed_mean(y, human, oracle, r, harm_floor));
  }
  return c;
}

/// Limit of the algorithm-only bound once every human-out/algo-in child
/// sits at the floor.
inline double bound_asymptote(const BoundCurve& c) {
  double sum = 0.0;
  for (int h = 0; h < 2; ++h)
    for (int a = 0; a < 2; ++a) {
      if (h == 0 && a == 1) {
        sum += static_cast<double>(c.cells.count[0][1]) * c.harm_floor;
      } else {
        for (double v : c.cells.outcomes[h][a]) sum += v;
      }
    }
  return sum / static_cast<double>(c.n);
}

struct RelianceCell {
  int score = 0;
  int arm = 0;
  std::size_t n = 0;
  double mean = std::nan("");
  double lo = std::nan("");
  double hi = std::nan("");
};

struct RelianceResult {
  std::vector<RelianceCell> cells;  // score-major, control then treated
  double gap_at_top = std::nan("");  // treated minus control at score 20
};

/// Mean harm of screened-out children by score and arm, with normal CIs.
/// Empty cells are reported as missing.
inline RelianceResult marginal_reliance(const Frame& f, double level = 0.95,
                                        const std::string& harm_column = "harm_index") {
  const auto& s = f.col("score");
  const auto& t = f.col("treated");
  const auto& si = f.col("screened_in");
  const auto& y = f.col(harm_column);
  std::vector<double> groups[20][2];
  for (std::size_t i = 0; i < f.rows(); ++i) {
    if (si[i] != 0.0) continue;
    const int sc = static_cast<int>(s[i]);
    if (sc < 1 || sc > 20) throw DataError("score out of range 1..20");
    groups[sc - 1][t[i] != 0.0].push_back(y[i]);
  }
  const double z = stats::normal_quantile(0.5 + level / 2.0);
  RelianceResult r;
  for (int sc = 1; sc <= 20; ++sc)
    for (int arm = 0; arm < 2; ++arm) {
      const auto& g = groups[sc - 1][arm];
      RelianceCell c;
      c.score = sc;
      c.arm = arm;
      c.n = g.size();
      if (!g.empty()) c.mean = stats::mean(g);
      if (g.size() >= 2) {
        const double se = stats::sd(g) / std::sqrt(static_cast<double>(g.size()));
        c.lo = c.mean - z * se;
        c.hi = c.mean + z * se;
      }
      r.cells.push_back(c);
    }
  r.gap_at_top = r.cells[38 + 1].mean - r.cells[38].mean;
  return r;
}

struct RegimeDisparity {
  std::string group;
  double human_only = std::nan("");
  double human_plus_algo = std::nan("");
  double algo_only = std::nan("");
};

namespace detail {

inline double rate_gap(const std::vector<bool>& d, const std::vector<double>& g, const std::vector<bool>& in_sample) {
  double s[2] = {0, 0}, n[2] = {0, 0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!in_sample[i]) continue;
    const int k = g[i] != 0.0;
    s[k] += d[i];
    n[k] += 1.0;
  }
  if (n[0] == 0.0 || n[1] == 0.0) return std::nan("");
  return s[1] / n[1] - s[0] / n[0];
}

}  // namespace detail

/// Screen-in rate of each group minus its complement under the observed
/// control decisions, the observed treated decisions, and the rule applied
/// to the control arm.
inline std::vector<RegimeDisparity> disparities_by_regime(const Frame& f, const std::vector<std::string>& groups,
                                                          const DecisionRule& rule, std::uint64_t seed) {
  const auto& t = f.col("treated");
  std::vector<bool> control(f.rows()), treated(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    control[i] = t[i] == 0.0;
    treated[i] = !control[i];
  }
  const auto observed = detail::observed(f);
  Frame c = f.filter(control);
  const auto algo = apply_rule(c, rule, seed);
  std::vector<RegimeDisparity> out;
  for (const auto& g : groups) {
    RegimeDisparity r;
    r.group = g;
    r.human_only = detail::rate_gap(observed, f.col(g), control);
    r.human_plus_algo = detail::rate_gap(observed, f.col(g), treated);
    r.algo_only = detail::rate_gap(algo, c.col(g), std::vector<bool>(c.rows(), true));
    out.push_back(r);
  }
  return out;
}

struct HealthDisparityCurve {
  std::string group;
  std::vector<double> r_grid;
  std::vector<double> gap;  // group minus out-group mean imputed harm
};

inline std::vector<HealthDisparityCurve> health_disparities_algo_only(const Frame& control, const DecisionRule& rule,
                                                                      const std::vector<double>& r_grid,
                                                                      const std::vector<std::string>& groups,
                                                                      double harm_floor, std::uint64_t seed) {
  const auto& y = control.col(rule.harm_column);
  const double ymin = *std::min_element(y.begin(), y.end());
  if (harm_floor > ymin) throw ConfigError("harm_floor", "exceeds the minimum observed harm");
  const auto human = detail::observed(control);
  const auto chosen = apply_rule(control, rule, seed);
  std::vector<HealthDisparityCurve> out;
  for (const auto& g : groups) {
    const auto& flag = control.col(g);
    HealthDisparityCurve c;
    c.group = g;
    c.r_grid = r_grid;
    for (double r : r_grid) {
      double s[2] = {0, 0}, n[2] = {0, 0};
      for (std::size_t i = 0; i < y.size(); ++i) {
        const int k = flag[i] != 0.0;
        s[k] += (!human[i] && chosen[i]) ? std::max(y[i] - r, harm_floor) : y[i];
        n[k] += 1.0;
      }
      c.gap.push_back(n[0] > 0 && n[1] > 0 ? s[1] / n[1] - s[0] / n[0] : std::nan(""));
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct MvpfResult {
  double savings = 0.0;
  double costs = 0.0;
  double net_government_cost = 0.0;  // costs - savings
  bool infinite = false;
  double value = std::nan("");  // willingness to pay / net cost when finite
  bool no_benefit = false;      // numerator is zero
};

/// Willingness to pay is proxied by the public savings, so the ratio is
/// finite only when the tool costs the government money on net.
inline MvpfResult mvpf(double children_prevented, double public_cost_per_child, double implementation_cost,
                       double annual_maintenance, double horizon_years) {
  for (double v : {children_prevented, public_cost_per_child, implementation_cost, annual_maintenance, horizon_years})
    if (!(v >= 0.0)) throw DomainError("mvpf: inputs must be non-negative");
  MvpfResult r;
  r.savings = children_prevented * public_cost_per_child;
  r.costs = implementation_cost + horizon_years * annual_maintenance;
  r.net_government_cost = r.costs - r.savings;
  r.no_benefit = r.savings == 0.0;
  if (r.net_government_cost <= 0.0 && !r.no_benefit) {
    r.infinite = true;
  } else if (r.net_government_cost > 0.0) {
    r.value = r.savings / r.net_government_cost;
  } else {
    r.value = 0.0;
  }
  return r;
}

}  // namespace algotriage::counterfactual
