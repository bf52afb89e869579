#pragma once

// Harm index: composite of the five hospitalization counts, standardized on a
// reference sample (the control arm by default). Lower is better.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "algotriage/error.hpp"

namespace algotriage::index {

inline constexpr std::size_t kNumOutcomes = 5;
inline constexpr std::array<std::string_view, kNumOutcomes> kOutcomeNames = {
    "high_priority", "injury", "avoidable_er", "maltreat_icd", "intentional"};
inline constexpr std::size_t kInjuryColumn = 1;

enum class Variant { equal_weight, obrien, binary, pca1 };
enum class Reference { control, full };

inline Variant parse_variant(std::string_view s) {
  if (s == "equal" || s == "equal_weight") return Variant::equal_weight;
  if (s == "obrien") return Variant::obrien;
  if (s == "binary") return Variant::binary;
  if (s == "pca1") return Variant::pca1;
  throw ConfigError("index", "unknown index variant '" + std::string(s) + "'");
}

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::equal_weight: return "equal";
    case Variant::obrien: return "obrien";
    case Variant::binary: return "binary";
    case Variant::pca1: return "pca1";
  }
  return "?";
}

struct IndexSpec {
  Variant variant = Variant::equal_weight;
  Reference reference = Reference::control;
  bool ridge = false;  // add 1e-8 to the diagonal when the O'Brien covariance is singular
};

/// Rows are children, columns the five outcome counts.
struct OutcomeMatrix {
  Eigen::MatrixXd counts;
  std::vector<bool> reference_mask;  // control rows

  std::size_t rows() const { return static_cast<std::size_t>(counts.rows()); }
};

namespace detail {

inline std::vector<bool> reference_rows(const OutcomeMatrix& om, Reference ref) {
  if (ref == Reference::full || om.reference_mask.empty()) return std::vector<bool>(om.rows(), true);
  if (om.reference_mask.size() != om.rows()) throw DataError("reference mask size mismatch");
  return om.reference_mask;
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

template <typename Column>
Moments reference_moments(const Column& x, const std::vector<bool>& ref) {
  double sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (ref[static_cast<std::size_t>(i)]) {
      sum += x[i];
      ++n;
    }
  }
  if (n < 2) throw DataError("standardization needs at least two reference rows");
  const double m = sum / static_cast<double>(n);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (ref[static_cast<std::size_t>(i)]) ss += (x[i] - m) * (x[i] - m);
  }
  return {m, std::sqrt(ss / static_cast<double>(n - 1))};
}

}  // namespace detail

/// (x - mean_ref) / sd_ref with the n-1 convention.
inline std::vector<double> standardize(std::span<const double> column,
                                       const std::vector<bool>& reference) {
  if (reference.size() != column.size()) throw DataError("reference mask size mismatch");
  const Eigen::Map<const Eigen::VectorXd> x(column.data(), static_cast<Eigen::Index>(column.size()));
  const auto mom = detail::reference_moments(x, reference);
  if (!(mom.sd > 0.0)) throw DataError("degenerate column: zero reference variance");
  std::vector<double> out(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) out[i] = (column[i] - mom.mean) / mom.sd;
  return out;
}

/// A fitted index transform; can be evaluated on any count vector.
struct IndexModel {
  Variant variant = Variant::equal_weight;
  Eigen::VectorXd col_mean, col_sd;
  Eigen::VectorXd weights;
  double shift = 0.0;
  double scale = 1.0;
  Eigen::VectorXd eigenvalues;  // descending; pca1 only

  double evaluate_row(const Eigen::Ref<const Eigen::RowVectorXd>& counts) const {
    double raw = 0.0;
    for (Eigen::Index j = 0; j < counts.size(); ++j) {
      double v = counts[j];
      if (variant == Variant::binary) v = v > 0.0 ? 1.0 : 0.0;
      raw += weights[j] * (v - col_mean[j]) / col_sd[j];
    }
    return (raw - shift) / scale;
  }

  std::vector<double> evaluate(const Eigen::MatrixXd& counts) const {
    std::vector<double> out(static_cast<std::size_t>(counts.rows()));
    for (Eigen::Index i = 0; i < counts.rows(); ++i) out[static_cast<std::size_t>(i)] = evaluate_row(counts.row(i));
    return out;
  }

  /// Index value of a child with zero events on every outcome.
  double floor() const { return evaluate_row(Eigen::RowVectorXd::Zero(col_mean.size())); }
};

inline IndexModel fit_index(const OutcomeMatrix& om, const IndexSpec& spec) {
  const auto ref = detail::reference_rows(om, spec.reference);
  const Eigen::Index k = om.counts.cols();
  if (k < 1) throw DataError("outcome matrix has no columns");
  if ((om.counts.array() < 0.0).any()) throw DataError("outcome counts must be non-negative");

  Eigen::MatrixXd x = om.counts;
  if (spec.variant == Variant::binary) x = (x.array() > 0.0).cast<double>();

  IndexModel model;
  model.variant = spec.variant;
  model.col_mean.resize(k);
  model.col_sd.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto mom = detail::reference_moments(x.col(j), ref);
    if (!(mom.sd > 0.0)) {
      throw DataError("degenerate column '" +
                      std::string(j < static_cast<Eigen::Index>(kNumOutcomes) ? kOutcomeNames[static_cast<std::size_t>(j)] : "?") +
                      "': zero reference variance");
    }
    model.col_mean[j] = mom.mean;
    model.col_sd[j] = mom.sd;
  }
  Eigen::MatrixXd z = (x.rowwise() - model.col_mean.transpose()).array().rowwise() /
                      model.col_sd.transpose().array();

  auto reference_covariance = [&]() {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, k);
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      if (!ref[static_cast<std::size_t>(i)]) continue;
      cov.noalias() += z.row(i).transpose() * z.row(i);
      ++n;
    }
    return Eigen::MatrixXd(cov / static_cast<double>(n - 1));
  };

  switch (spec.variant) {
    case Variant::equal_weight:
    case Variant::binary:
      model.weights = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
      break;
    case Variant::obrien: {
      Eigen::MatrixXd cov = reference_covariance();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
      const double lo = es.eigenvalues().minCoeff();
      const double hi = es.eigenvalues().maxCoeff();
      if (!(lo > 1e-12 * std::max(hi, 1.0))) {
        if (!spec.ridge) {
          throw EstimationError(
              "O'Brien index: singular outcome covariance; enable the ridge option");
        }
        cov.diagonal().array() += 1e-8;
      }
      model.weights = cov.ldlt().solve(Eigen::VectorXd::Ones(k));
      break;
    }
    case Variant::pca1: {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reference_covariance());
      // Eigen sorts ascending.
      model.eigenvalues = es.eigenvalues().reverse();
      Eigen::VectorXd v = es.eigenvectors().col(k - 1);
      const Eigen::Index anchor = k > static_cast<Eigen::Index>(kInjuryColumn) ? static_cast<Eigen::Index>(kInjuryColumn) : 0;
      if (v[anchor] < 0.0 || (v[anchor] == 0.0 && v.sum() < 0.0)) v = -v;
      model.weights = v;
      return model;  // component scores, not restandardized
    }
  }

  const Eigen::VectorXd raw = z * model.weights;
  const auto mom = detail::reference_moments(raw, ref);
  if (!(mom.sd > 0.0)) throw DataError("harm index has zero reference variance");
  model.shift = mom.mean;
  model.scale = mom.sd;
  return model;
}

inline std::vector<double> harm_index(const OutcomeMatrix& om, const IndexSpec& spec) {
  return fit_index(om, spec).evaluate(om.counts);
}

inline double harm_floor(const OutcomeMatrix& om, const IndexSpec& spec) {
  return fit_index(om, spec).floor();
}

/// Cronbach's alpha on columns standardized over the full sample.
inline double cronbach_alpha(const OutcomeMatrix& om) {
  const Eigen::Index k = om.counts.cols();
  if (k < 2) throw DomainError("cronbach_alpha needs at least two columns");
  const std::vector<bool> all(om.rows(), true);
  Eigen::MatrixXd z(om.counts.rows(), k);
  double item_var = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto mom = detail::reference_moments(om.counts.col(j), all);
    if (!(mom.sd > 0.0)) throw DataError("cronbach_alpha: constant column");
    z.col(j) = (om.counts.col(j).array() - mom.mean) / mom.sd;
    item_var += 1.0;
  }
  const Eigen::VectorXd total = z.rowwise().sum();
  const auto mom = detail::reference_moments(total, all);
  const double total_var = mom.sd * mom.sd;
  if (!(total_var > 0.0)) throw DataError("cronbach_alpha: zero total variance");
  const double kk = static_cast<double>(k);
  return kk / (kk - 1.0) * (1.0 - item_var / total_var);
}

/// Flags the ceil(q N) largest values; ties go to the earlier row.
inline std::vector<bool> top_percentile_flag(std::span<const double> values, double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("top_percentile_flag: q must lie in (0, 1)");
  const std::size_t n = values.size();
  const auto k = std::min(n, static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<bool> flags(n, false);
  for (std::size_t i = 0; i < k; ++i) flags[order[i]] = true;
  return flags;
}

}  // namespace algotriage::index
