#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "drivesense/error.hpp"

namespace drivesense {

// 2x2 confusion matrix, rows = observed class, columns = predicted class.
struct Confusion {
  std::array<std::array<std::int64_t, 2>, 2> counts{};

  static Confusion from_rows(std::array<std::int64_t, 2> observed0, std::array<std::int64_t, 2> observed1) {
    return Confusion{{observed0, observed1}};
  }

  void add(int observed, int predicted) { ++counts[observed][predicted]; }

  std::int64_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
  std::int64_t observed(int k) const { return counts[k][0] + counts[k][1]; }
  std::int64_t predicted(int k) const { return counts[0][k] + counts[1][k]; }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct DerivedMetrics {
  double accuracy = 0.0;
  std::array<ClassMetrics, 2> per_class{};
};

// Undefined ratios (empty row or column) are reported as 0.
inline DerivedMetrics derive_metrics(const Confusion& c) {
  if (c.total() == 0) throw Error(Errc::empty_dataset, "empty confusion matrix");
  auto ratio = [](std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  DerivedMetrics d;
  d.accuracy = ratio(c.counts[0][0] + c.counts[1][1], c.total());
  for (int k = 0; k < 2; ++k) {
    auto& m = d.per_class[k];
    m.precision = ratio(c.counts[k][k], c.predicted(k));
    m.recall = ratio(c.counts[k][k], c.observed(k));
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  return d;
}

// Mann-Whitney U / (n_pos * n_neg) with average ranks for tied scores. NaN
// when one class is absent.
inline double auc_mann_whitney(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(Errc::invalid_argument, "scores/labels size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum_pos += avg;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

}  // namespace drivesense
