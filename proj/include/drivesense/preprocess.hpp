#pragma once

// Outlier flooring/capping at the 10th/90th percentiles followed by a
// per-column rank transform onto (0, 1).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivesense/dbi.hpp"
#include "drivesense/error.hpp"

namespace drivesense {

inline constexpr double kFloorQuantile = 0.10;
inline constexpr double kCapQuantile = 0.90;

// Linear-interpolation quantile of already sorted values.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(Errc::empty_dataset, "quantile of empty sequence");
  if (p < 0.0 || p > 1.0) throw Error(Errc::invalid_argument, "quantile fraction outside [0,1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted[lo];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::span<const double> values, double p) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, p);
}

inline std::vector<double> winsorize(std::span<const double> column, double lo_p = kFloorQuantile,
                                     double hi_p = kCapQuantile) {
  std::vector<double> sorted(column.begin(), column.end());
  std::sort(sorted.begin(), sorted.end());
  const double floor = quantile_sorted(sorted, lo_p);
  const double cap = quantile_sorted(sorted, hi_p);
  std::vector<double> out(column.begin(), column.end());
  for (auto& v : out) v = std::clamp(v, floor, cap);
  return out;
}

// Population skewness g1 = m3 / m2^(3/2).
inline double skewness(std::span<const double> column) {
  const auto n = static_cast<double>(column.size());
  if (column.size() < 3) throw Error(Errc::degenerate_column, "skewness needs at least 3 values");
  const double mean = std::accumulate(column.begin(), column.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : column) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (!(m2 > 1e-300) || m2 <= 1e-24 * mean * mean) throw Error(Errc::degenerate_column, "zero variance");
  return m3 / std::pow(m2, 1.5);
}

inline std::optional<double> try_skewness(std::span<const double> column) {
  try {
    return skewness(column);
  } catch (const Error&) {
    return std::nullopt;
  }
}

// Hazen plotting positions (r - 0.5) / m with tie-averaged ranks.
inline std::vector<double> quantile_normalize(std::span<const double> column) {
  const std::size_t m = column.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return column[a] < column[b]; });
  std::vector<double> out(m);
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && column[order[j + 1]] == column[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    const double pos = (avg_rank - 0.5) / static_cast<double>(m);
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = pos;
    i = j + 1;
  }
  return out;
}

// Fitted floor/cap plus the training empirical CDF. Applying it to the
// training column reproduces winsorize + quantile_normalize exactly; unseen
// values are interpolated between neighbouring training values.
class ColumnTransform {
 public:
  static ColumnTransform fit(std::span<const double> column, double lo_p = kFloorQuantile,
                             double hi_p = kCapQuantile) {
    ColumnTransform t;
    std::vector<double> sorted(column.begin(), column.end());
    std::sort(sorted.begin(), sorted.end());
    t.floor_ = quantile_sorted(sorted, lo_p);
    t.cap_ = quantile_sorted(sorted, hi_p);
    for (auto& v : sorted) v = std::clamp(v, t.floor_, t.cap_);
    const double m = static_cast<double>(sorted.size());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      t.knots_.push_back(sorted[i]);
      t.positions_.push_back((avg_rank - 0.5) / m);
      i = j + 1;
    }
    return t;
  }

  double floor() const { return floor_; }
  double cap() const { return cap_; }

  double clamp(double v) const { return std::clamp(v, floor_, cap_); }

  double apply(double v) const {
    v = clamp(v);
    const auto it = std::lower_bound(knots_.begin(), knots_.end(), v);
    if (it == knots_.end()) return std::clamp(positions_.back(), 0.0, 1.0);
    const auto k = static_cast<std::size_t>(it - knots_.begin());
    if (*it == v || k == 0) return std::clamp(positions_[k], 0.0, 1.0);
    const double x0 = knots_[k - 1], x1 = knots_[k];
    const double y0 = positions_[k - 1], y1 = positions_[k];
    return std::clamp(y0 + (v - x0) / (x1 - x0) * (y1 - y0), 0.0, 1.0);
  }

 private:
  double floor_ = 0.0;
  double cap_ = 0.0;
  std::vector<double> knots_;
  std::vector<double> positions_;
};

struct ColumnReport {
  std::string name;
  std::optional<double> skewness_before;
  std::optional<double> skewness_after;
  double floor_value = 0.0;
  double cap_value = 0.0;
  std::size_t n_floored = 0;
  std::size_t n_capped = 0;
};

struct PreprocessReport {
  std::vector<ColumnReport> columns;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& c : columns) {
      auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
      j[c.name] = {{"skewness_before", opt(c.skewness_before)},
                   {"skewness_after", opt(c.skewness_after)},
                   {"floor_value", c.floor_value},
                   {"cap_value", c.cap_value},
                   {"n_floored", c.n_floored},
                   {"n_capped", c.n_capped}};
    }
    return j;
  }
};

// Transforms fitted on one matrix (the training split) and applied to any
// matrix with the same columns.
class Preprocessor {
 public:
  Preprocessor() = default;

  static Preprocessor fit(const FeatureMatrix& x, std::span<const std::string> continuous) {
    Preprocessor p;
    for (const auto& name : continuous) {
      const std::size_t c = x.column_index(name);
      p.columns_.push_back({name, c, ColumnTransform::fit(x.column(c))});
    }
    return p;
  }

  FeatureMatrix transform(const FeatureMatrix& x, PreprocessReport* report = nullptr) const {
    FeatureMatrix out = x;
    for (const auto& col : columns_) {
      const std::size_t c = x.column_index(col.name);
      auto values = x.column(c);
      ColumnReport rep;
      rep.name = col.name;
      rep.skewness_before = try_skewness(values);
      rep.floor_value = col.transform.floor();
      rep.cap_value = col.transform.cap();
      for (auto& v : values) {
        if (v < rep.floor_value) ++rep.n_floored;
        if (v > rep.cap_value) ++rep.n_capped;
        v = col.transform.apply(v);
      }
      rep.skewness_after = try_skewness(values);
      out.set_column(c, values);
      if (report) report->columns.push_back(std::move(rep));
    }
    return out;
  }

 private:
  struct Column {
    std::string name;
    std::size_t index;
    ColumnTransform transform;
  };
  std::vector<Column> columns_;
};

inline std::vector<std::string> default_continuous_columns() {
  auto names = driving_feature_names();
  return {names.begin(), names.end()};
}

// Fit and apply on the same matrix. Columns outside `continuous` and the
// labels pass through untouched.
inline std::pair<FeatureMatrix, PreprocessReport> preprocess_matrix(const FeatureMatrix& x,
                                                                    std::span<const std::string> continuous) {
  PreprocessReport report;
  auto out = Preprocessor::fit(x, continuous).transform(x, &report);
  return {std::move(out), std::move(report)};
}

inline std::pair<FeatureMatrix, PreprocessReport> preprocess_matrix(const FeatureMatrix& x) {
  const auto cols = default_continuous_columns();
  return preprocess_matrix(x, cols);
}

}  // namespace drivesense
