#pragma once

// Canonical dataset: one row per child, numeric columns, a leading
// schema_version column. Written as RFC-4180 CSV or as JSON lines.

#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "algotriage/cohort.hpp"
#include "algotriage/csv.hpp"
#include "algotriage/frame.hpp"
#include "algotriage/index.hpp"

namespace algotriage::dataset {

inline constexpr int kSchemaVersion = 1;

inline std::vector<std::string> outcome_columns(const std::string& prefix = "") {
  std::vector<std::string> out;
  for (auto n : index::kOutcomeNames) out.push_back(prefix + std::string(n));
  return out;
}

inline Frame to_frame(std::span<const cohort::ChildRecord> records) {
  const std::size_t n = records.size();
  Frame f(n);
  auto column = [&](const char* name, auto getter) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(getter(records[i]));
    f.set(name, std::move(v));
  };
  using R = cohort::ChildRecord;
  column("schema_version", [](const R&) { return kSchemaVersion; });
  column("child_id", [](const R& r) { return r.child_id; });
  column("household_id", [](const R& r) { return r.household_id; });
  column("referral_id", [](const R& r) { return r.referral_id; });
  column("referral_day", [](const R& r) { return r.referral_day; });
  column("black", [](const R& r) { return r.black; });
  column("hispanic", [](const R& r) { return r.hispanic; });
  column("female", [](const R& r) { return r.female; });
  column("snap", [](const R& r) { return r.snap; });
  column("motherless", [](const R& r) { return r.motherless; });
  column("sibling_count", [](const R& r) { return r.sibling_count; });
  column("score", [](const R& r) { return r.score; });
  column("treated", [](const R& r) { return r.treated; });
  column("score_recorded", [](const R& r) { return r.score_recorded; });
  column("screened_in", [](const R& r) { return r.screened_in; });
  column("found_injury", [](const R& r) { return r.found_injury; });
  column("decision_minutes", [](const R& r) { return r.decision_minutes; });
  const auto names = outcome_columns();
  const auto prior = outcome_columns("prior_");
  for (std::size_t j = 0; j < cohort::kNumOutcomes; ++j) {
    column(names[j].c_str(), [j](const R& r) { return r.outcomes[j]; });
  }
  for (std::size_t j = 0; j < cohort::kNumOutcomes; ++j) {
    column(prior[j].c_str(), [j](const R& r) { return r.prior_outcomes[j]; });
  }
  column("removed", [](const R& r) { return r.removed; });
  column("re_referrals", [](const R& r) { return r.re_referrals; });
  column("switched", [](const R& r) { return r.switched; });
  column("rc_stratum", [](const R& r) { return r.rc_stratum; });
  return f;
}

inline index::OutcomeMatrix outcome_matrix(const Frame& f, const std::string& prefix = "") {
  index::OutcomeMatrix om;
  const auto names = outcome_columns(prefix);
  om.counts.resize(static_cast<Eigen::Index>(f.rows()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto& c = f.col(names[j]);
    for (std::size_t i = 0; i < f.rows(); ++i) om.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c[i];
  }
  const auto& t = f.col("treated");
  om.reference_mask.resize(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) om.reference_mask[i] = t[i] == 0.0;
  return om;
}

/// Appends harm_index, prior_harm_index and top1_harm (pooled top 1%).
/// Returns the fitted transform of the post-period index.
inline index::IndexModel add_indices(Frame& f, const index::IndexSpec& spec) {
  const auto om = outcome_matrix(f);
  const auto model = index::fit_index(om, spec);
  auto h = model.evaluate(om.counts);
  const auto top = index::top_percentile_flag(h, 0.01);
  f.set("harm_index", h);
  f.set("top1_harm", std::vector<double>(top.begin(), top.end()));
  const auto prior = outcome_matrix(f, "prior_");
  f.set("prior_harm_index", index::harm_index(prior, spec));
  return model;
}

inline void write_csv(std::ostream& os, const Frame& f) {
  if (f.names().empty() || f.names().front() != "schema_version") {
    throw DataError("dataset must start with the schema_version column");
  }
  csv::write_row(os, f.names());
  std::vector<std::string> row(f.names().size());
  std::vector<const std::vector<double>*> cols;
  for (const auto& n : f.names()) cols.push_back(&f.col(n));
  for (std::size_t i = 0; i < f.rows(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) row[j] = csv::format_double((*cols[j])[i]);
    csv::write_row(os, row);
  }
}

inline Frame read_csv(std::istream& is) {
  std::vector<std::string> header;
  if (!csv::read_row(is, header)) throw DataError("empty dataset file");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  if (header.empty() || header[0] != "schema_version") {
    throw DataError("missing column 'schema_version' in dataset header");
  }
  std::vector<std::vector<double>> cols(header.size());
  std::vector<std::string> fields;
  std::size_t line = 1;
  while (csv::read_row(is, fields)) {
    ++line;
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      throw DataError("row " + std::to_string(line) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) cols[j].push_back(csv::parse_double(fields[j], header[j]));
  }
  for (double v : cols[0]) {
    if (v != kSchemaVersion) {
      throw DataError("schema_version mismatch: file has " + csv::format_double(v) + ", expected " +
                      std::to_string(kSchemaVersion));
    }
  }
  Frame f(cols[0].size());
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (f.has(header[j])) throw DataError("duplicate column '" + header[j] + "'");
    f.set(header[j], std::move(cols[j]));
  }
  return f;
}

/// One JSON object per row; missing values become null.
inline void write_jsonl(std::ostream& os, const Frame& f) {
  std::vector<const std::vector<double>*> cols;
  for (const auto& n : f.names()) cols.push_back(&f.col(n));
  for (std::size_t i = 0; i < f.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double v = (*cols[j])[i];
      if (std::isnan(v)) {
        row[f.names()[j]] = nullptr;
      } else if (v == std::floor(v) && std::abs(v) < 9e15) {
        row[f.names()[j]] = static_cast<std::int64_t>(v);
      } else {
        row[f.names()[j]] = v;
      }
    }
    os << row.dump() << '\n';
  }
}

inline void require_columns(const Frame& f, std::initializer_list<std::string_view> names) {
  for (auto n : names)
    if (!f.has(n)) throw DataError("missing column '" + std::string(n) + "'");
}

}  // namespace algotriage::dataset
