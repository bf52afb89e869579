#pragma once

// JSON configuration with sections cohort / model / analysis /
// counterfactual. Unknown keys are rejected so typos surface as errors.

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "algotriage/cohort.hpp"
#include "algotriage/counterfactual.hpp"
#include "algotriage/error.hpp"
#include "algotriage/index.hpp"
#include "algotriage/inference.hpp"
#include "algotriage/model.hpp"

namespace algotriage::config {

using json = nlohmann::ordered_json;

struct ModelConfig {
  model::ModelParams params = model::ModelParams::with_groups({{"B", 2.0}, {"W", 1.0}}, 1.0, 2.0);
  std::size_t n = 1000000;
  std::uint64_t seed = 11;
  std::size_t n_batches = 100;
};

struct AnalysisConfig {
  index::IndexSpec index{};
  std::size_t n_perm = 999;
  std::uint64_t seed = 17;
  bool studentized = false;
  std::vector<std::string> balance_covariates = inference::default_balance_covariates();
  std::vector<std::string> loo_features = inference::default_loo_features();
  std::vector<std::string> groups{"black", "hispanic", "female", "snap"};
  int top_score = 16;
  std::size_t scan_groups = 1000;
  std::size_t scan_min_size = 100;
  inference::PowerInputs power{.mean_c = 0.0, .mean_t = -0.061};
};

struct CounterfactualConfig {
  counterfactual::DecisionRule rule{};
  std::vector<double> r_grid = counterfactual::default_r_grid();
  std::optional<double> floor;  // empty: the zero-count index value
  bool treated_arm = false;     // mandate and bounds use the control arm by default
  std::uint64_t seed = 23;
};

struct AppConfig {
  cohort::CohortConfig cohort{};
  ModelConfig model{};
  AnalysisConfig analysis{};
  CounterfactualConfig counterfactual{};
};

namespace detail {

inline void reject_unknown(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(section, "must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError(section.empty() ? k : section + "." + k, "unknown key");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(section + "." + key, std::string("bad value: ") + e.what());
  }
}

inline void read_group(const json& j, const char* key, cohort::GroupParams& g) {
  if (!j.contains(key)) return;
  const std::string s = std::string("cohort.disparity_params.") + key;
  reject_unknown(j.at(key), s, {"share", "risk_shift", "worker_bias"});
  read(j.at(key), "share", g.share, s);
  read(j.at(key), "risk_shift", g.risk_shift, s);
  read(j.at(key), "worker_bias", g.worker_bias, s);
}

}  // namespace detail

inline cohort::CohortConfig cohort_from_json(const json& j) {
  using detail::read;
  cohort::CohortConfig c;
  const std::string s = "cohort";
  detail::reject_unknown(j, s,
                         {"n_children", "mean_household_size", "max_household_size", "split_referral_prob",
                          "treatment_share", "screen_in_rate", "score_pmf", "removal_prob_by_score",
                          "control_outcome_means", "outcome_dispersion", "severity_variance",
                          "household_risk_share", "score_signal_corr", "worker_noise_var", "noise_reduction",
                          "itt_effect_sd", "first_stage", "prior_outcome_scale", "outcome_window",
                          "motherless_share", "quirk_enabled", "n_days", "quirk_cutoff_day", "switch_share",
                          "disparity_params", "seed", "n_households"});
  if (j.contains("n_households"))
    throw ConfigError("cohort.n_households", "households are derived from n_children and mean_household_size");
  read(j, "n_children", c.n_children, s);
  read(j, "mean_household_size", c.mean_household_size, s);
  read(j, "max_household_size", c.max_household_size, s);
  read(j, "split_referral_prob", c.split_referral_prob, s);
  read(j, "treatment_share", c.treatment_share, s);
  read(j, "screen_in_rate", c.screen_in_rate, s);
  read(j, "score_pmf", c.score_pmf, s);
  read(j, "removal_prob_by_score", c.removal_prob_by_score, s);
  read(j, "control_outcome_means", c.control_outcome_means, s);
  read(j, "outcome_dispersion", c.outcome_dispersion, s);
  read(j, "severity_variance", c.severity_variance, s);
  read(j, "household_risk_share", c.household_risk_share, s);
  read(j, "score_signal_corr", c.score_signal_corr, s);
  read(j, "worker_noise_var", c.worker_noise_var, s);
  read(j, "noise_reduction", c.noise_reduction, s);
  read(j, "itt_effect_sd", c.itt_effect_sd, s);
  read(j, "first_stage", c.first_stage, s);
  read(j, "prior_outcome_scale", c.prior_outcome_scale, s);
  read(j, "outcome_window", c.outcome_window, s);
  read(j, "motherless_share", c.motherless_share, s);
  read(j, "quirk_enabled", c.quirk_enabled, s);
  read(j, "n_days", c.n_days, s);
  read(j, "quirk_cutoff_day", c.quirk_cutoff_day, s);
  read(j, "switch_share", c.switch_share, s);
  read(j, "seed", c.seed, s);
  if (j.contains("disparity_params")) {
    const auto& d = j.at("disparity_params");
    detail::reject_unknown(d, "cohort.disparity_params", {"black", "hispanic", "female", "snap"});
    detail::read_group(d, "black", c.disparity_params.black);
    detail::read_group(d, "hispanic", c.disparity_params.hispanic);
    detail::read_group(d, "female", c.disparity_params.female);
    detail::read_group(d, "snap", c.disparity_params.snap);
  }
  return c;
}

inline json to_json(const cohort::GroupParams& g) {
  return {{"share", g.share}, {"risk_shift", g.risk_shift}, {"worker_bias", g.worker_bias}};
}

inline json to_json(const cohort::CohortConfig& c) {
  return {{"n_children", c.n_children},
          {"mean_household_size", c.mean_household_size},
          {"max_household_size", c.max_household_size},
          {"split_referral_prob", c.split_referral_prob},
          {"treatment_share", c.treatment_share},
          {"screen_in_rate", c.screen_in_rate},
          {"score_pmf", c.score_pmf},
          {"removal_prob_by_score", c.removal_prob_by_score},
          {"control_outcome_means", c.control_outcome_means},
          {"outcome_dispersion", c.outcome_dispersion},
          {"severity_variance", c.severity_variance},
          {"household_risk_share", c.household_risk_share},
          {"score_signal_corr", c.score_signal_corr},
          {"worker_noise_var", c.worker_noise_var},
          {"noise_reduction", c.noise_reduction},
          {"itt_effect_sd", c.itt_effect_sd},
          {"first_stage", c.first_stage},
          {"prior_outcome_scale", c.prior_outcome_scale},
          {"outcome_window", c.outcome_window},
          {"motherless_share", c.motherless_share},
          {"quirk_enabled", c.quirk_enabled},
          {"n_days", c.n_days},
          {"quirk_cutoff_day", c.quirk_cutoff_day},
          {"switch_share", c.switch_share},
          {"disparity_params",
           {{"black", to_json(c.disparity_params.black)},
            {"hispanic", to_json(c.disparity_params.hispanic)},
            {"female", to_json(c.disparity_params.female)},
            {"snap", to_json(c.disparity_params.snap)}}},
          {"seed", c.seed}};
}

inline ModelConfig model_from_json(const json& j) {
  using detail::read;
  const std::string s = "model";
  detail::reject_unknown(j, s, {"alpha", "mean_r", "var_r", "var_eps_c", "a", "groups", "n", "seed", "n_batches"});
  ModelConfig m;
  auto& p = m.params;
  if (j.contains("groups") || j.contains("alpha") || j.contains("mean_r") || j.contains("var_r")) p.groups.clear();
  read(j, "alpha", p.alpha, s);
  read(j, "mean_r", p.mean_r, s);
  read(j, "var_r", p.var_r, s);
  read(j, "var_eps_c", p.var_eps_c, s);
  read(j, "a", p.a, s);
  read(j, "n", m.n, s);
  read(j, "seed", m.seed, s);
  read(j, "n_batches", m.n_batches, s);
  if (j.contains("groups")) {
    if (!j.at("groups").is_array()) throw ConfigError("model.groups", "must be an array");
    for (const auto& g : j.at("groups")) {
      detail::reject_unknown(g, "model.groups[]", {"label", "share", "mean_r", "var_r", "alpha"});
      model::RiskGroup rg;
      read(g, "label", rg.label, "model.groups[]");
      read(g, "share", rg.share, "model.groups[]");
      read(g, "var_r", rg.var_r, "model.groups[]");
      rg.mean_r = 5.0 * std::sqrt(rg.var_r);
      read(g, "mean_r", rg.mean_r, "model.groups[]");
      rg.alpha = rg.mean_r;
      read(g, "alpha", rg.alpha, "model.groups[]");
      p.groups.push_back(rg);
    }
  }
  p.validate();
  return m;
}

inline json to_json(const ModelConfig& m) {
  json groups = json::array();
  for (const auto& g : m.params.groups)
    groups.push_back({{"label", g.label}, {"share", g.share}, {"mean_r", g.mean_r}, {"var_r", g.var_r}, {"alpha", g.alpha}});
  json j = {{"var_eps_c", m.params.var_eps_c}, {"a", m.params.a}, {"n", m.n}, {"seed", m.seed}, {"n_batches", m.n_batches}};
  if (m.params.groups.empty()) {
    j["alpha"] = m.params.alpha;
    j["mean_r"] = m.params.mean_r;
    j["var_r"] = m.params.var_r;
  } else {
    j["groups"] = groups;
  }
  return j;
}

inline AnalysisConfig analysis_from_json(const json& j) {
  using detail::read;
  const std::string s = "analysis";
  detail::reject_unknown(j, s,
                         {"index", "reference", "ridge", "n_perm", "seed", "studentized", "balance_covariates",
                          "loo_features", "groups", "top_score", "scan_groups", "scan_min_size", "power"});
  AnalysisConfig a;
  if (j.contains("index")) {
    std::string v;
    read(j, "index", v, s);
    a.index.variant = index::parse_variant(v);
  }
  if (j.contains("reference")) {
    std::string r;
    read(j, "reference", r, s);
    if (r == "control") a.index.reference = index::Reference::control;
    else if (r == "full") a.index.reference = index::Reference::full;
    else throw ConfigError("analysis.reference", "must be 'control' or 'full'");
  }
  read(j, "ridge", a.index.ridge, s);
  read(j, "n_perm", a.n_perm, s);
  read(j, "seed", a.seed, s);
  read(j, "studentized", a.studentized, s);
  read(j, "balance_covariates", a.balance_covariates, s);
  read(j, "loo_features", a.loo_features, s);
  read(j, "groups", a.groups, s);
  read(j, "top_score", a.top_score, s);
  read(j, "scan_groups", a.scan_groups, s);
  read(j, "scan_min_size", a.scan_min_size, s);
  if (j.contains("power")) {
    const auto& p = j.at("power");
    const std::string ps = "analysis.power";
    detail::reject_unknown(p, ps, {"mean_c", "mean_t", "sd", "clusters_per_arm", "cluster_size", "icc", "cv", "alpha"});
    read(p, "mean_c", a.power.mean_c, ps);
    read(p, "mean_t", a.power.mean_t, ps);
    read(p, "sd", a.power.sd, ps);
    read(p, "clusters_per_arm", a.power.clusters_per_arm, ps);
    read(p, "cluster_size", a.power.cluster_size, ps);
    read(p, "icc", a.power.icc, ps);
    read(p, "cv", a.power.cv, ps);
    read(p, "alpha", a.power.alpha, ps);
  }
  if (a.n_perm < 99) throw ConfigError("analysis.n_perm", "must be at least 99");
  return a;
}

inline json to_json(const AnalysisConfig& a) {
  return {{"index", index::to_string(a.index.variant)},
          {"reference", a.index.reference == index::Reference::control ? "control" : "full"},
          {"ridge", a.index.ridge},
          {"n_perm", a.n_perm},
          {"seed", a.seed},
          {"studentized", a.studentized},
          {"balance_covariates", a.balance_covariates},
          {"loo_features", a.loo_features},
          {"groups", a.groups},
          {"top_score", a.top_score},
          {"scan_groups", a.scan_groups},
          {"scan_min_size", a.scan_min_size},
          {"power",
           {{"mean_c", a.power.mean_c},
            {"mean_t", a.power.mean_t},
            {"sd", a.power.sd},
            {"clusters_per_arm", a.power.clusters_per_arm},
            {"cluster_size", a.power.cluster_size},
            {"icc", a.power.icc},
            {"cv", a.power.cv},
            {"alpha", a.power.alpha}}}};
}

inline CounterfactualConfig counterfactual_from_json(const json& j) {
  using detail::read;
  const std::string s = "counterfactual";
  detail::reject_unknown(j, s, {"rule", "rate", "threshold", "r_grid", "floor", "treated_arm", "seed"});
  CounterfactualConfig c;
  if (j.contains("rule")) {
    std::string r;
    read(j, "rule", r, s);
    c.rule.kind = counterfactual::parse_rule(r);
  }
  read(j, "rate", c.rule.rate, s);
  read(j, "threshold", c.rule.threshold, s);
  read(j, "r_grid", c.r_grid, s);
  read(j, "treated_arm", c.treated_arm, s);
  read(j, "seed", c.seed, s);
  if (j.contains("floor")) {
    const auto& f = j.at("floor");
    if (f.is_string()) {
      if (f.get<std::string>() != "auto") throw ConfigError("counterfactual.floor", "must be 'auto' or a number");
    } else if (f.is_number()) {
      c.floor = f.get<double>();
    } else {
      throw ConfigError("counterfactual.floor", "must be 'auto' or a number");
    }
  }
  c.rule.validate();
  return c;
}

inline json to_json(const CounterfactualConfig& c) {
  json j = {{"rule", counterfactual::to_string(c.rule.kind)},
            {"rate", c.rule.rate},
            {"threshold", c.rule.threshold},
            {"r_grid", c.r_grid},
            {"treated_arm", c.treated_arm},
            {"seed", c.seed}};
  if (c.floor) j["floor"] = *c.floor;
  else j["floor"] = "auto";
  return j;
}

inline AppConfig from_json(const json& j) {
  detail::reject_unknown(j, "", {"cohort", "model", "analysis", "counterfactual"});
  AppConfig a;
  if (j.contains("cohort")) a.cohort = cohort_from_json(j.at("cohort"));
  if (j.contains("model")) a.model = model_from_json(j.at("model"));
  if (j.contains("analysis")) a.analysis = analysis_from_json(j.at("analysis"));
  if (j.contains("counterfactual")) a.counterfactual = counterfactual_from_json(j.at("counterfactual"));
  return a;
}

inline json to_json(const AppConfig& a) {
  return {{"cohort", to_json(a.cohort)},
          {"model", to_json(a.model)},
          {"analysis", to_json(a.analysis)},
          {"counterfactual", to_json(a.counterfactual)}};
}

inline AppConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", std::string("parse error: ") + e.what());
  }
  return from_json(j);
}

}  // namespace algotriage::config
