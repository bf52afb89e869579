#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "algotriage/cohort.hpp"
#include "algotriage/config.hpp"
#include "algotriage/counterfactual.hpp"
#include "algotriage/csv.hpp"
#include "algotriage/dataset.hpp"
#include "algotriage/index.hpp"
#include "algotriage/inference.hpp"
#include "algotriage/model.hpp"

namespace algotriage::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

namespace {

using csv::format_double;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    row.resize(header.size());
    rows.push_back(std::move(row));
  }
};

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }

struct Run {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  int code = ExitCode::ok;
};

void write_table(const Table& t, const fs::path& path, Run& run) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  csv::write_row(os, t.header);
  for (const auto& r : t.rows) csv::write_row(os, r);
  run.outputs.push_back(path.string());
}

Table read_table(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read '" + path.string() + "'");
  Table t;
  if (!csv::read_row(is, t.header)) throw DataError("empty table '" + path.string() + "'");
  std::vector<std::string> row;
  while (csv::read_row(is, row)) t.rows.push_back(row);
  return t;
}

Table regression_table() {
  return {{"outcome", "term", "coef", "se", "t", "p", "ci_lo", "ci_hi", "base_mean", "n_obs", "n_clusters",
           "permutation_p", "sample"},
          {}};
}

void add_terms(Table& t, const std::string& outcome, const RegressionResult& r, const std::string& sample,
               bool all_terms = false) {
  const std::size_t last = all_terms ? r.terms.size() - 1 : r.n_focal;
  for (std::size_t k = 1; k <= last; ++k) {
    const auto e = r.estimate(r.terms[k]);
    const auto [lo, hi] = r.confidence_interval(r.terms[k]);
    t.add({outcome, e.name, fmt(e.coef), fmt(e.se), fmt(e.t), fmt(e.p), fmt(lo), fmt(hi), fmt(r.outcome_mean_base),
           fmt(r.n_obs), fmt(r.n_clusters), r.permutation_p ? fmt(*r.permutation_p) : "", sample});
  }
}

// ---------------------------------------------------------------- analysis

struct Analysis {
  Frame frame;
  index::IndexModel index_model;
  const config::AppConfig& cfg;
  unsigned threads;
};

Analysis prepare(const std::string& data_path, const config::AppConfig& cfg, unsigned threads, Run& run) {
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw DataError("cannot read dataset '" + data_path + "'");
  run.inputs.push_back(data_path);
  Frame f = dataset::read_csv(in);
  dataset::require_columns(f, {"household_id", "treated", "screened_in", "score", "rc_stratum"});
  auto model = dataset::add_indices(f, cfg.analysis.index);
  inference::add_randomization_controls(f);
  return {std::move(f), std::move(model), cfg, threads};
}

const std::vector<std::string> kMainOutcomes = {"harm_index", "high_priority", "injury",   "avoidable_er",
                                               "maltreat_icd", "intentional",  "top1_harm"};

void table_main(Analysis& a, const fs::path& dir, Run& run) {
  Table t = regression_table();
  for (const auto& o : kMainOutcomes) {
    auto r = inference::itt(a.frame, o);
    if (o == "harm_index") {
      inference::PermutationOptions po;
      po.n_perm = a.cfg.analysis.n_perm;
      po.seed = a.cfg.analysis.seed;
      po.studentized = a.cfg.analysis.studentized;
      po.threads = a.threads;
      r.permutation_p = inference::permutation_test(a.frame, inference::itt_spec(a.frame, o), po).p;
    }
    add_terms(t, o, r, "all");
  }
  write_table(t, dir / "table_main.csv", run);

  // Mean harm by score quintile and arm.
  Table q{{"score_quintile", "arm", "n", "mean_harm", "ci_lo", "ci_hi"}, {}};
  const auto& s = a.frame.col("score");
  const auto& tr = a.frame.col("treated");
  const auto& h = a.frame.col("harm_index");
  for (int quint = 1; quint <= 5; ++quint)
    for (int arm = 0; arm < 2; ++arm) {
      std::vector<double> v;
      for (std::size_t i = 0; i < h.size(); ++i)
        if ((static_cast<int>(s[i]) - 1) / 4 + 1 == quint && (tr[i] != 0.0) == (arm == 1)) v.push_back(h[i]);
      double m = std::nan(""), lo = std::nan(""), hi = std::nan("");
      if (!v.empty()) m = stats::mean(v);
      if (v.size() >= 2) {
        const double se = stats::sd(v) / std::sqrt(static_cast<double>(v.size()));
        lo = m - 1.96 * se;
        hi = m + 1.96 * se;
      }
      q.add({std::to_string(quint), arm ? "treated" : "control", fmt(v.size()), fmt(m), fmt(lo), fmt(hi)});
    }
  write_table(q, dir / "series_harm_by_quintile.csv", run);

  Table l = regression_table();
  const auto parts = inference::learning_split(a.frame, "harm_index");
  for (std::size_t k = 0; k < parts.size(); ++k) add_terms(l, "harm_index", parts[k], "day_tercile_" + std::to_string(k + 1));
  write_table(l, dir / "series_learning.csv", run);
}

void table_targeting(Analysis& a, const fs::path& dir, Run& run) {
  auto r = inference::targeting_tests(a.frame, a.cfg.analysis.loo_features, a.cfg.analysis.top_score);
  Table t = regression_table();
  add_terms(t, "harm_index", r.screened_out_harm, "screened_out");
  add_terms(t, "found_injury", r.screened_in_injury, "screened_in");
  add_terms(t, "prior_harm_index", r.prior_harm_top, "top_score_quartile");
  add_terms(t, "loo_predicted_harm", r.predicted_harm_top, "top_score_quartile");
  const auto scan = inference::subgroup_targeting_scan(a.frame, a.cfg.analysis.scan_groups,
                                                       a.cfg.analysis.scan_min_size, a.cfg.analysis.seed);
  t.add({"overall_itt_on_screened_out_itt", "slope", fmt(scan.slope), fmt(scan.se), fmt(scan.slope / scan.se),
         fmt(scan.p), "", "", "", fmt(scan.points.size()), "", "", "random_subgroups"});
  write_table(t, dir / "table_targeting.csv", run);
  Table s{{"group", "size", "screened_out_itt", "overall_itt"}, {}};
  for (std::size_t g = 0; g < scan.points.size(); ++g)
    s.add({std::to_string(g + 1), fmt(scan.points[g].size), fmt(scan.points[g].screened_out_itt),
           fmt(scan.points[g].overall_itt)});
  write_table(s, dir / "series_subgroup_scan.csv", run);
}

void table_disparities(Analysis& a, const fs::path& dir, Run& run) {
  Table t{{"group", "term", "coef", "se", "p", "pct_effect_on_disparity", "n_obs", "n_clusters"}, {}};
  std::vector<inference::DisparityResult> results;
  for (const auto& g : a.cfg.analysis.groups) {
    results.push_back(inference::disparity_model(a.frame, g, "harm_index"));
    const auto& r = results.back();
    for (const auto* e : {&r.type, &r.treated, &r.interaction})
      t.add({g, e->name, fmt(e->coef), fmt(e->se), fmt(e->p), e == &r.interaction ? fmt(r.pct_effect) : "",
             fmt(r.regression.n_obs), fmt(r.regression.n_clusters)});
  }
  if (results.size() >= 2) {
    const auto jt = inference::joint_disparity_chi2(results);
    t.add({"all", "joint_chi2", fmt(jt.statistic), "", fmt(jt.p), "", "", fmt(jt.df1)});
  }
  write_table(t, dir / "table_disparities.csv", run);
}

void table_balance(Analysis& a, const fs::path& dir, Run& run) {
  std::vector<std::string> covs;
  for (const auto& c : a.cfg.analysis.balance_covariates)
    if (a.frame.has(c)) covs.push_back(c);
    else throw DataError("missing column '" + c + "'");
  const auto b = inference::balance_f_test(a.frame, covs);
  Table t{{"covariate", "control_mean", "treated_mean", "coef", "se", "p"}, {}};
  const auto& tr = a.frame.col("treated");
  for (const auto& c : covs) {
    const auto& v = a.frame.col(c);
    double s[2] = {0, 0}, n[2] = {0, 0};
    for (std::size_t i = 0; i < v.size(); ++i) {
      s[tr[i] != 0.0] += v[i];
      n[tr[i] != 0.0] += 1.0;
    }
    const auto e = b.regression.estimate(c);
    t.add({c, fmt(s[0] / n[0]), fmt(s[1] / n[1]), fmt(e.coef), fmt(e.se), fmt(e.p)});
  }
  t.add({"share_treated", "", fmt(stats::mean(tr)), "", "", ""});
  t.add({"joint_F", "", "", fmt(b.test.statistic), "", fmt(b.test.p)});
  write_table(t, dir / "table_balance.csv", run);
}

void table_firststage(Analysis& a, const fs::path& dir, Run& run) {
  Table t = regression_table();
  add_terms(t, "score_recorded", inference::first_stage(a.frame, false), "all");
  add_terms(t, "score_recorded", inference::first_stage(a.frame, true), "all_with_score_interaction");
  write_table(t, dir / "table_firststage.csv", run);
}

void table_spillover(Analysis& a, const fs::path& dir, Run& run) {
  const auto s = inference::spillover_test(a.frame);
  Table t = regression_table();
  for (std::size_t k = 0; k < s.outcomes.size(); ++k) add_terms(t, s.outcomes[k], s.regressions[k], "multi_referral_days");
  write_table(t, dir / "table_spillover.csv", run);
}

void table_bounds(Analysis& a, const fs::path& dir, Run& run) {
  const auto b = inference::compliance_bounds(a.frame);
  Table t{{"estimate", "value", "switchers", "uninformative"}, {}};
  for (const auto& [name, v] : {std::pair{"main", b.main}, {"switchers_at_minimum", b.lower}, {"switchers_at_p99", b.upper}})
    t.add({name, fmt(v), fmt(b.switchers), b.uninformative ? "1" : "0"});
  write_table(t, dir / "table_bounds.csv", run);
}

void table_power(Analysis& a, const fs::path& dir, Run& run) {
  Table t{{"inputs", "mean_c", "mean_t", "sd", "clusters_per_arm", "cluster_size", "icc", "cv", "alpha", "design_effect",
           "power"},
          {}};
  auto row = [&t](const std::string& name, const inference::PowerInputs& p) {
    t.add({name, fmt(p.mean_c), fmt(p.mean_t), fmt(p.sd), fmt(p.clusters_per_arm), fmt(p.cluster_size), fmt(p.icc),
           fmt(p.cv), fmt(p.alpha), fmt(inference::design_effect(p.cluster_size, p.icc, p.cv)),
           fmt(inference::power_calc(p))});
  };
  row("config", a.cfg.analysis.power);
  // Same design, harm-index moments taken from the data.
  std::vector<double> arm[2];
  const auto& tr = a.frame.col("treated");
  const auto& h = a.frame.col("harm_index");
  for (std::size_t i = 0; i < h.size(); ++i)
    if (!std::isnan(h[i])) arm[tr[i] != 0.0].push_back(h[i]);
  if (arm[0].size() >= 2 && arm[1].size() >= 2) {
    auto p = a.cfg.analysis.power;
    p.mean_c = stats::mean(arm[0]);
    p.mean_t = stats::mean(arm[1]);
    p.sd = std::sqrt((stats::variance(arm[0]) + stats::variance(arm[1])) / 2.0);
    row("observed", p);
  }
  write_table(t, dir / "table_power.csv", run);
}

void table_robustness(Analysis& a, const fs::path& dir, Run& run) {
  Table t{{"specification", "coef", "se", "p", "n_obs", "n_clusters"}, {}};
  auto row = [&](const std::string& name, const RegressionResult& r) {
    const auto e = r.estimate("treated");
    t.add({name, fmt(e.coef), fmt(e.se), fmt(e.p), fmt(r.n_obs), fmt(r.n_clusters)});
  };
  const auto main = inference::itt(a.frame, "harm_index");
  row("main", main);
  inference::PermutationOptions po;
  po.n_perm = a.cfg.analysis.n_perm;
  po.seed = a.cfg.analysis.seed;
  po.studentized = a.cfg.analysis.studentized;
  po.threads = a.threads;
  const auto perm = inference::permutation_test(a.frame, inference::itt_spec(a.frame, "harm_index"), po);
  t.add({"permutation_p", "", "", fmt(perm.p), fmt(main.n_obs), ""});
  const auto fs_coef = inference::first_stage(a.frame).estimate("treated").coef;
  t.add({"iv_wald", fmt(inference::iv_wald(main.estimate("treated").coef, fs_coef)), "", "", fmt(main.n_obs), ""});
  for (auto v : {index::Variant::obrien, index::Variant::binary, index::Variant::pca1}) {
    Frame g = a.frame;
    auto spec = a.cfg.analysis.index;
    spec.variant = v;
    spec.ridge = true;
    dataset::add_indices(g, spec);
    row(std::string("index_") + std::string(index::to_string(v)), inference::itt(g, "harm_index"));
  }
  const auto b = inference::compliance_bounds(a.frame);
  t.add({"switchers_at_minimum", fmt(b.lower), "", "", "", ""});
  t.add({"switchers_at_p99", fmt(b.upper), "", "", "", ""});
  auto spec = inference::itt_spec(a.frame, "harm_index");
  spec.cluster = "referral_id";
  row("cluster_referral", ols_cluster(a.frame, spec));
  write_table(t, dir / "table_robustness.csv", run);
}

const std::map<std::string, void (*)(Analysis&, const fs::path&, Run&)> kTables = {
    {"main", table_main},         {"targeting", table_targeting}, {"disparities", table_disparities},
    {"balance", table_balance},   {"firststage", table_firststage}, {"spillover", table_spillover},
    {"bounds", table_bounds},     {"power", table_power},         {"robustness", table_robustness}};

// ---------------------------------------------------------- counterfactual

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> g;
  auto num = [&](const std::string& x) { return csv::parse_double(x, "r-grid"); };
  if (s.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(num(item));
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
      throw ConfigError("r-grid", "expected start:stop:step");
    const auto steps = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (std::size_t i = 0; i <= steps; ++i) g.push_back(parts[0] + parts[2] * static_cast<double>(i));
    return g;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) g.push_back(num(item));
  if (g.empty()) throw ConfigError("r-grid", "empty grid");
  return g;
}

// ------------------------------------------------------------------ report

const std::vector<std::pair<std::string, std::string>> kReportMap = {
    {"table_main.csv", "main_effects.csv"},
    {"table_targeting.csv", "targeting_tests.csv"},
    {"table_disparities.csv", "harm_disparities.csv"},
    {"table_firststage.csv", "first_stage.csv"},
    {"table_balance.csv", "balance.csv"},
    {"table_robustness.csv", "robustness.csv"},
    {"table_bounds.csv", "compliance_bounds.csv"},
    {"table_power.csv", "power.csv"},
    {"table_spillover.csv", "spillover.csv"},
    {"marginal_reliance.csv", "series_marginal_reliance.csv"},
    {"disparities_by_regime.csv", "series_screen_in_disparities.csv"},
    {"series_harm_by_quintile.csv", "series_harm_by_score_quintile.csv"},
    {"series_subgroup_scan.csv", "series_subgroup_scan.csv"},
    {"bound_curve.csv", "series_bound_curve.csv"},
    {"health_disparities.csv", "series_health_disparities.csv"},
    {"mvpf.csv", "mvpf.csv"},
};

// --------------------------------------------------------------- plumbing

std::optional<std::string> env(const char* name) {
  if (const char* v = std::getenv(name); v && *v) return std::string(v);
  return std::nullopt;
}

std::uint64_t parse_u64(const std::string& s, const std::string& field) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "not an unsigned integer: '" + s + "'");
  }
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '"', '\'');
  return s;
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_dir = "out";
  bool ignore_env = false;
  // generate
  std::optional<std::size_t> n;
  std::optional<int> window;
  std::optional<double> itt;
  bool no_quirk = false;
  std::string index;
  // model-verify
  std::optional<double> a;
  // analyze / counterfactual
  std::string data;
  std::vector<std::string> tables;
  std::optional<std::size_t> n_perm;
  std::string rule, r_grid, floor;
  std::optional<double> rate;
  std::optional<int> threshold;
  bool treated_arm = false;
  std::string mvpf = "20,62500,280000,15000,2";
  // report / replay
  std::string in_dir;
  std::string manifest;
};

int execute(const std::string& sub, const std::vector<std::string>& args, const Options& o, std::ostream& out,
            std::ostream& err);

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic trial cohorts, decision-model checks, trial estimators and counterfactual bounds"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* s) {
    s->add_option("--config", o.config_path, "JSON config file");
    s->add_option("--seed", o.seed, "seed override");
    s->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    s->add_option("--out", o.out_dir, "output directory");
    s->add_flag("--ignore-env", o.ignore_env, "ignore ALGOTRIAGE_* variables")->group("");
  };
  auto* gen = app.add_subcommand("generate", "generate a synthetic cohort");
  common(gen);
  gen->add_option("--n", o.n, "number of children");
  gen->add_option("--window", o.window, "outcome exclusion window (0, 30, 60)");
  gen->add_option("--itt", o.itt, "injected harm-index ITT in SD units");
  gen->add_flag("--no-quirk", o.no_quirk, "disable the individual-assignment quirk");
  gen->add_option("--index", o.index, "index variant: equal|obrien|binary|pca1");

  auto* mv = app.add_subcommand("model-verify", "check the decision-model propositions by Monte Carlo");
  common(mv);
  mv->add_option("--n", o.n, "draws per arm");
  mv->add_option("--a", o.a, "noise-reduction factor");

  auto* an = app.add_subcommand("analyze", "estimate trial tables from a dataset");
  common(an);
  an->add_option("--data", o.data, "dataset CSV")->required();
  an->add_option("--table", o.tables, "main|targeting|disparities|balance|firststage|spillover|bounds|power|robustness|all")
      ->required();
  an->add_option("--n-perm", o.n_perm, "permutations");
  an->add_option("--index", o.index, "index variant: equal|obrien|binary|pca1");

  auto* cf = app.add_subcommand("counterfactual", "counterfactual decision-rule bounds");
  common(cf);
  cf->add_option("--data", o.data, "dataset CSV")->required();
  cf->add_option("--rule", o.rule, "algo_only|oracle|mandate|human_only|human_plus_algo");
  cf->add_option("--rate", o.rate, "screen-in rate for capacity rules");
  cf->add_option("--threshold", o.threshold, "mandate score threshold");
  cf->add_option("--r-grid", o.r_grid, "start:stop:step or comma list");
  cf->add_option("--floor", o.floor, "auto or a number");
  cf->add_flag("--treated-arm", o.treated_arm, "evaluate on the treated arm");
  cf->add_option("--mvpf", o.mvpf, "prevented,cost_per_child,implementation,maintenance,years");
  cf->add_option("--index", o.index, "index variant: equal|obrien|binary|pca1");

  auto* rp = app.add_subcommand("report", "assemble tables and series from prior outputs");
  common(rp);
  rp->add_option("--in", o.in_dir, "directory holding prior outputs");

  auto* rr = app.add_subcommand("replay", "re-run a manifest and compare output hashes");
  rr->add_option("--manifest", o.manifest, "manifest JSON")->required();
  rr->add_option("--out", o.out_dir, "output directory for the replay");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return ExitCode::ok;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return ExitCode::ok;
  } catch (const CLI::ParseError& e) {
    err << "error kind=config field=argv message=\"" << one_line(e.what()) << "\"\n";
    return ExitCode::config_error;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  return execute(sub, args, o, out, err);
}

namespace {

json manifest_json(const std::string& sub, const std::vector<std::string>& args, const config::AppConfig& cfg,
                   const Run& run, double seconds) {
  json j;
  j["subcommand"] = sub;
  j["args"] = args;
  j["config"] = config::to_json(cfg);
  j["seeds"] = {{"cohort", cfg.cohort.seed},
                {"model", cfg.model.seed},
                {"analysis", cfg.analysis.seed},
                {"counterfactual", cfg.counterfactual.seed}};
  j["inputs"] = json::array();
  for (const auto& p : run.inputs) j["inputs"].push_back({{"path", p}, {"sha256", sha256_file(p)}});
  j["outputs"] = json::array();
  for (const auto& p : run.outputs) j["outputs"].push_back({{"path", p}, {"sha256", sha256_file(p)}});
  j["version"] = kVersion;
  j["duration_seconds"] = seconds;
  return j;
}

/// Args with the options that replay supplies itself removed.
std::vector<std::string> replayable_args(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a == "--config" || a == "--out" || a == "--seed" || a == "--threads") {
      ++i;
      continue;
    }
    if (a == "--ignore-env" || a.rfind("--config=", 0) == 0 || a.rfind("--out=", 0) == 0 || a.rfind("--seed=", 0) == 0 ||
        a.rfind("--threads=", 0) == 0)
      continue;
    out.push_back(a);
  }
  return out;
}

config::AppConfig resolve_config(const Options& o, const std::string& sub) {
  config::AppConfig cfg = o.config_path.empty() ? config::AppConfig{} : config::load(o.config_path);
  std::optional<std::uint64_t> seed = o.seed;
  if (!seed && !o.ignore_env)
    if (auto e = env("ALGOTRIAGE_SEED")) seed = parse_u64(*e, "ALGOTRIAGE_SEED");
  if (seed) {
    if (sub == "generate") cfg.cohort.seed = *seed;
    if (sub == "model-verify") cfg.model.seed = *seed;
    if (sub == "analyze") cfg.analysis.seed = *seed;
    if (sub == "counterfactual") cfg.counterfactual.seed = *seed;
  }
  if (o.n && sub == "generate") cfg.cohort.n_children = *o.n;
  if (o.n && sub == "model-verify") cfg.model.n = *o.n;
  if (o.window) cfg.cohort.outcome_window = *o.window;
  if (o.itt) cfg.cohort.itt_effect_sd = *o.itt;
  if (o.no_quirk) cfg.cohort.quirk_enabled = false;
  if (!o.index.empty()) cfg.analysis.index.variant = index::parse_variant(o.index);
  if (o.a) cfg.model.params.a = *o.a;
  if (o.n_perm) {
    if (*o.n_perm < 99) throw ConfigError("n-perm", "must be at least 99");
    cfg.analysis.n_perm = *o.n_perm;
  }
  auto& cf = cfg.counterfactual;
  if (!o.rule.empty()) cf.rule.kind = counterfactual::parse_rule(o.rule);
  if (o.rate) cf.rule.rate = *o.rate;
  if (o.threshold) cf.rule.threshold = *o.threshold;
  if (!o.r_grid.empty()) cf.r_grid = parse_grid(o.r_grid);
  if (!o.floor.empty()) {
    if (o.floor == "auto") cf.floor.reset();
    else cf.floor = csv::parse_double(o.floor, "floor");
  }
  if (o.treated_arm) cf.treated_arm = true;
  cf.rule.validate();
  cfg.model.params.validate();
  cfg.cohort.validate();
  return cfg;
}

unsigned resolve_threads(const Options& o) {
  if (o.threads) return *o.threads;
  if (!o.ignore_env)
    if (auto e = env("ALGOTRIAGE_THREADS"))
      return static_cast<unsigned>(std::max<std::uint64_t>(1, parse_u64(*e, "ALGOTRIAGE_THREADS")));
  return 1;
}

void cmd_generate(const config::AppConfig& cfg, const fs::path& dir, Run& run, std::ostream& out) {
  cohort::CohortGenerator gen(cfg.cohort);
  const auto records = gen.generate();
  Frame f = dataset::to_frame(records);
  if (!records.empty()) dataset::add_indices(f, cfg.analysis.index);
  {
    std::ofstream os(dir / "cohort.csv", std::ios::binary);
    dataset::write_csv(os, f);
  }
  run.outputs.push_back((dir / "cohort.csv").string());
  {
    std::ofstream os(dir / "cohort.jsonl", std::ios::binary);
    dataset::write_jsonl(os, f);
  }
  run.outputs.push_back((dir / "cohort.jsonl").string());
  out << "generated " << records.size() << " children, screen-in effect " << gen.calibration().screen_in_effect
      << "\n";
}

void cmd_model_verify(const config::AppConfig& cfg, const fs::path& dir, Run& run, std::ostream& out) {
  const auto rep = model::verify_propositions(cfg.model.params, cfg.model.n, cfg.model.seed, cfg.model.n_batches);
  json j;
  j["n_per_arm"] = rep.n_per_arm;
  j["seed"] = rep.seed;
  j["checks"] = json::array();
  std::ostringstream txt;
  txt << std::left << std::setw(6) << "id" << std::setw(10) << "status" << std::setw(24) << "margin" << std::setw(24)
      << "mcse" << "claim\n";
  for (const auto& c : rep.checks) {
    json cj{{"id", c.id},
            {"claim", c.claim},
            {"margin", c.margin},
            {"margin_mcse", c.margin_mcse},
            {"vacuous", c.vacuous},
            {"equality_holds", c.equality_holds},
            {"status", model::to_string(c.status)}};
    cj["quantities"] = json::array();
    for (const auto& q : c.quantities) {
      json qj{{"name", q.name}, {"estimate", q.estimate}, {"mcse", q.mcse}};
      qj["closed_form"] = q.closed_form ? json(*q.closed_form) : json(nullptr);
      cj["quantities"].push_back(qj);
    }
    j["checks"].push_back(cj);
    txt << std::left << std::setw(6) << c.id << std::setw(10) << model::to_string(c.status) << std::setw(24)
        << format_double(c.margin) << std::setw(24) << format_double(c.margin_mcse) << c.claim << "\n";
  }
  {
    std::ofstream os(dir / "propositions.json", std::ios::binary);
    os << j.dump(2) << "\n";
  }
  {
    std::ofstream os(dir / "propositions.txt", std::ios::binary);
    os << txt.str();
  }
  run.outputs.push_back((dir / "propositions.json").string());
  run.outputs.push_back((dir / "propositions.txt").string());
  out << txt.str();
  if (!rep.all_pass_or_vacuous()) run.code = ExitCode::check_failure;
}

void cmd_analyze(const Options& o, const config::AppConfig& cfg, unsigned threads, const fs::path& dir, Run& run) {
  auto a = prepare(o.data, cfg, threads, run);
  std::vector<std::string> names;
  for (const auto& t : o.tables) {
    if (t == "all") {
      for (const auto& [k, v] : kTables) names.push_back(k);
    } else if (kTables.count(t)) {
      names.push_back(t);
    } else {
      throw ConfigError("table", "unknown table '" + t + "'");
    }
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  for (const auto& n : names) kTables.at(n)(a, dir, run);
}

void cmd_counterfactual(const Options& o, const config::AppConfig& cfg, const fs::path& dir, Run& run) {
  auto a = prepare(o.data, cfg, 1, run);
  const auto& cf = cfg.counterfactual;
  const auto& tr = a.frame.col("treated");
  RowMask arm(a.frame.rows());
  for (std::size_t i = 0; i < arm.size(); ++i) arm[i] = (tr[i] != 0.0) == cf.treated_arm;
  const Frame sample = a.frame.filter(arm);
  const double floor = cf.floor.value_or(a.index_model.floor());

  const auto curve = counterfactual::bound_algo_only(sample, cf.rule, cf.r_grid, floor, cf.seed);
  Table b{{"r", "regime", "mean_harm"}, {}};
  for (std::size_t k = 0; k < curve.r_grid.size(); ++k) {
    b.add({fmt(curve.r_grid[k]), "human_only", fmt(curve.human_only_mean)});
    b.add({fmt(curve.r_grid[k]), std::string(counterfactual::to_string(cf.rule.kind)), fmt(curve.algo_mean[k])});
    b.add({fmt(curve.r_grid[k]), "oracle", fmt(curve.oracle_mean[k])});
  }
  write_table(b, dir / "bound_curve.csv", run);

  Table cells{{"human", "rule", "count", "mean_harm"}, {}};
  for (int h = 0; h < 2; ++h)
    for (int r = 0; r < 2; ++r) {
      const auto& v = curve.cells.outcomes[h][r];
      cells.add({h ? "in" : "out", r ? "in" : "out", fmt(curve.cells.count[h][r]),
                 v.empty() ? "" : fmt(stats::mean(v))});
    }
  cells.add({"floor", "", "", fmt(floor)});
  cells.add({"asymptote", "", "", fmt(counterfactual::bound_asymptote(curve))});
  write_table(cells, dir / "bound_cells.csv", run);

  counterfactual::DecisionRule algo = cf.rule;
  if (algo.kind != counterfactual::RuleKind::algo_only) algo.kind = counterfactual::RuleKind::algo_only;
  const auto disp = counterfactual::disparities_by_regime(a.frame, cfg.analysis.groups, algo, cf.seed);
  Table d{{"group", "human_only", "human_plus_algo", "algo_only"}, {}};
  for (const auto& r : disp) d.add({r.group, fmt(r.human_only), fmt(r.human_plus_algo), fmt(r.algo_only)});
  write_table(d, dir / "disparities_by_regime.csv", run);

  const auto rel = counterfactual::marginal_reliance(a.frame);
  Table m{{"score", "arm", "n", "mean_harm", "ci_lo", "ci_hi"}, {}};
  for (const auto& c : rel.cells)
    m.add({std::to_string(c.score), c.arm ? "treated" : "control", fmt(c.n), fmt(c.mean), fmt(c.lo), fmt(c.hi)});
  m.add({"20", "treated_minus_control", "", fmt(rel.gap_at_top), "", ""});
  write_table(m, dir / "marginal_reliance.csv", run);

  const auto health = counterfactual::health_disparities_algo_only(sample, algo, cf.r_grid, cfg.analysis.groups,
                                                                   floor, cf.seed);
  Table h{{"group", "r", "gap"}, {}};
  for (const auto& c : health)
    for (std::size_t k = 0; k < c.r_grid.size(); ++k) h.add({c.group, fmt(c.r_grid[k]), fmt(c.gap[k])});
  write_table(h, dir / "health_disparities.csv", run);

  counterfactual::DecisionRule mandate = cf.rule;
  mandate.kind = counterfactual::RuleKind::mandate;
  const auto before = counterfactual::apply_rule(sample, {counterfactual::RuleKind::human_only}, cf.seed);
  const auto after = counterfactual::apply_rule(sample, mandate, cf.seed);
  const double n = static_cast<double>(sample.rows());
  const double r0 = static_cast<double>(std::count(before.begin(), before.end(), true)) / n;
  const double r1 = static_cast<double>(std::count(after.begin(), after.end(), true)) / n;
  Table md{{"threshold", "screen_in_before", "screen_in_after", "increase"}, {}};
  md.add({std::to_string(mandate.threshold), fmt(r0), fmt(r1), fmt(r1 - r0)});
  write_table(md, dir / "mandate.csv", run);

  std::vector<double> mv;
  {
    std::stringstream ss(o.mvpf);
    std::string item;
    while (std::getline(ss, item, ',')) mv.push_back(csv::parse_double(item, "mvpf"));
  }
  if (mv.size() != 5) throw ConfigError("mvpf", "expected five comma-separated numbers");
  const auto res = counterfactual::mvpf(mv[0], mv[1], mv[2], mv[3], mv[4]);
  Table mt{{"savings", "costs", "net_government_cost", "mvpf"}, {}};
  mt.add({fmt(res.savings), fmt(res.costs), fmt(res.net_government_cost), res.infinite ? "inf" : fmt(res.value)});
  write_table(mt, dir / "mvpf.csv", run);
}

void cmd_report(const Options& o, const fs::path& dir, Run& run, std::ostream& out) {
  const fs::path in = o.in_dir.empty() ? dir : fs::path(o.in_dir);
  const fs::path rep = dir / "report";
  fs::create_directories(rep);
  Table index{{"artifact", "source", "status"}, {}};
  std::size_t found = 0;
  for (const auto& [src, dst] : kReportMap) {
    const fs::path p = in / src;
    if (!fs::exists(p)) {
      index.add({dst, src, "missing"});
      continue;
    }
    ++found;
    run.inputs.push_back(p.string());
    const Table t = read_table(p);
    write_table(t, rep / dst, run);
    index.add({dst, src, "ok"});
  }
  if (found == 0) throw DataError("no analysis outputs found in '" + in.string() + "'");
  write_table(index, rep / "index.csv", run);
  out << "report: " << found << " of " << kReportMap.size() << " artifacts assembled in " << rep.string() << "\n";
}

int cmd_replay(const Options& o, std::ostream& out, std::ostream& err) {
  std::ifstream in(o.manifest);
  if (!in) throw DataError("cannot read manifest '" + o.manifest + "'");
  json m;
  try {
    m = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest parse error: ") + e.what());
  }
  for (const auto& key : {"subcommand", "args", "config", "outputs", "inputs"})
    if (!m.contains(key)) throw DataError(std::string("manifest lacks '") + key + "'");
  for (const auto& i : m.at("inputs")) {
    const auto path = i.at("path").get<std::string>();
    if (!fs::exists(path) || sha256_file(path) != i.at("sha256").get<std::string>())
      throw DataError("manifest input '" + path + "' is missing or changed");
  }
  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  const fs::path cfg_path = dir / "replay_config.json";
  {
    std::ofstream os(cfg_path, std::ios::binary);
    os << m.at("config").dump(2) << "\n";
  }
  std::vector<std::string> args = replayable_args(m.at("args").get<std::vector<std::string>>());
  // The first element is the subcommand.
  args.insert(args.begin() + 1, {"--config", cfg_path.string(), "--out", dir.string(), "--ignore-env"});
  const std::string sub = m.at("subcommand").get<std::string>();
  if (sub == "report" && std::find(args.begin(), args.end(), "--in") == args.end()) {
    // A report without --in read its own output directory; point it back there.
    const auto first = m.at("outputs").at(0).at("path").get<std::string>();
    args.insert(args.end(), {"--in", fs::path(first).parent_path().parent_path().string()});
  }
  std::ostringstream sink;
  const int code = run(args, sink, err);
  if (code != ExitCode::ok && code != ExitCode::check_failure) return code;
  bool same = true;
  for (const auto& entry : m.at("outputs")) {
    const fs::path orig = entry.at("path").get<std::string>();
    fs::path replayed = dir / orig.filename();
    if (orig.parent_path().filename() == "report") replayed = dir / "report" / orig.filename();
    const bool match = fs::exists(replayed) && sha256_file(replayed.string()) == entry.at("sha256").get<std::string>();
    out << (match ? "same " : "DIFF ") << orig.filename().string() << "\n";
    same = same && match;
  }
  return same ? ExitCode::ok : ExitCode::check_failure;
}

int execute(const std::string& sub, const std::vector<std::string>& args, const Options& o, std::ostream& out,
            std::ostream& err) {
  try {
    if (sub == "replay") return cmd_replay(o, out, err);
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = resolve_config(o, sub);
    const unsigned threads = resolve_threads(o);
    const fs::path dir = o.out_dir;
    fs::create_directories(dir);
    Run run;
    if (sub == "generate") cmd_generate(cfg, dir, run, out);
    else if (sub == "model-verify") cmd_model_verify(cfg, dir, run, out);
    else if (sub == "analyze") cmd_analyze(o, cfg, threads, dir, run);
    else if (sub == "counterfactual") cmd_counterfactual(o, cfg, dir, run);
    else if (sub == "report") cmd_report(o, dir, run, out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string name = "manifest_" + sub;
    if (sub == "analyze") {
      std::vector<std::string> t = o.tables;
      std::sort(t.begin(), t.end());
      for (const auto& x : t) name += "_" + x;
    }
    const fs::path mpath = dir / (name + ".json");
    std::ofstream ms(mpath, std::ios::binary);
    ms << manifest_json(sub, args, cfg, run, secs).dump(2) << "\n";
    for (const auto& p : run.outputs) out << "wrote " << p << "\n";
    out << "manifest " << mpath.string() << "\n";
    return run.code;
  } catch (const ConfigError& e) {
    err << "error kind=config field=" << e.field() << " message=\"" << one_line(e.what()) << "\"\n";
    return ExitCode::config_error;
  } catch (const DomainError& e) {
    err << "error kind=domain message=\"" << one_line(e.what()) << "\"\n";
    return ExitCode::config_error;
  } catch (const Error& e) {
    err << "error kind=" << e.kind() << " message=\"" << one_line(e.what()) << "\"\n";
    return ExitCode::data_error;
  } catch (const std::exception& e) {
    err << "error kind=internal message=\"" << one_line(e.what()) << "\"\n";
    return ExitCode::data_error;
  }
}

}  // namespace

}  // namespace algotriage::cli
