#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "algotriage/error.hpp"

namespace algotriage {

using RowMask = std::vector<bool>;

/// Column-oriented numeric table. Column order is insertion order.
class Frame {
 public:
  Frame() = default;
  explicit Frame(std::size_t rows) : rows_(rows) {}

  std::size_t rows() const noexcept { return rows_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  bool has(std::string_view name) const { return lookup_.count(std::string(name)) > 0; }

  const std::vector<double>& col(std::string_view name) const {
    auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) throw DataError("missing column '" + std::string(name) + "'");
    return columns_[it->second];
  }

  void set(std::string name, std::vector<double> values) {
    if (names_.empty() && rows_ == 0) rows_ = values.size();
    if (values.size() != rows_) {
      throw DataError("column '" + name + "' has " + std::to_string(values.size()) +
                      " rows, expected " + std::to_string(rows_));
    }
    auto it = lookup_.find(name);
    if (it != lookup_.end()) {
      columns_[it->second] = std::move(values);
      return;
    }
    lookup_.emplace(name, columns_.size());
    names_.push_back(std::move(name));
    columns_.push_back(std::move(values));
  }

  Frame filter(const RowMask& mask) const {
    if (mask.size() != rows_) throw DataError("row mask size mismatch");
    const auto kept = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    Frame out(kept);
    for (std::size_t c = 0; c < names_.size(); ++c) {
      std::vector<double> v;
      v.reserve(kept);
      for (std::size_t i = 0; i < rows_; ++i)
        if (mask[i]) v.push_back(columns_[c][i]);
      out.set(names_[c], std::move(v));
    }
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

/// Rows where `column == value`.
inline RowMask where_equal(const Frame& f, std::string_view column, double value) {
  const auto& c = f.col(column);
  RowMask m(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) m[i] = c[i] == value;
  return m;
}

inline RowMask mask_and(const RowMask& a, const RowMask& b) {
  if (a.size() != b.size()) throw DataError("row mask size mismatch");
  RowMask m(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) m[i] = a[i] && b[i];
  return m;
}

inline std::vector<double> product(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace algotriage
