#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "drivesense/preprocess.hpp"
#include "drivesense/rng.hpp"

using namespace drivesense;

namespace {

std::vector<double> one_to_ten() {
  std::vector<double> v(10);
  std::iota(v.begin(), v.end(), 1.0);
  return v;
}

std::vector<double> lognormal_column(std::uint64_t seed, std::size_t n, double sigma) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.lognormal(0.0, sigma);
  return v;
}

FeatureMatrix matrix_with(const std::vector<std::vector<double>>& cols, std::vector<std::string> names) {
  FeatureMatrix m;
  m.rows = cols.front().size();
  m.cols = cols.size();
  m.column_names = std::move(names);
  m.data.resize(m.rows * m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = cols[c][r];
    m.labels.push_back(static_cast<int>(r % 2));
    m.participant_ids.push_back("p" + std::to_string(r % 7));
    m.period_ids.push_back("2024Q1");
    m.trip_ids.push_back("t" + std::to_string(r));
  }
  return m;
}

}  // namespace

TEST(Quantile, LinearInterpolation) {
  const auto v = one_to_ten();
  EXPECT_NEAR(quantile(v, 0.10), 1.9, 1e-12);
  EXPECT_NEAR(quantile(v, 0.90), 9.1, 1e-12);
  EXPECT_EQ(quantile(v, 0.0), 1.0);
  EXPECT_EQ(quantile(v, 1.0), 10.0);
  EXPECT_EQ(quantile(std::vector<double>{3, -1, 7}, 0.0), -1.0);
  EXPECT_THROW(quantile(std::vector<double>{}, 0.5), Error);
  EXPECT_THROW(quantile(v, 1.5), Error);
}

TEST(Winsorize, OneToTen) {
  const auto w = winsorize(one_to_ten());
  const std::vector<double> expected{1.9, 2, 3, 4, 5, 6, 7, 8, 9, 9.1};
  ASSERT_EQ(w.size(), expected.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], expected[i], 1e-12);
}

TEST(Winsorize, ConstantColumnUnchanged) {
  const std::vector<double> v(20, 4.25);
  EXPECT_EQ(winsorize(v), v);
}

TEST(Winsorize, RangeIsQuantileBounds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = lognormal_column(seed, 500, 1.0);
    const auto w = winsorize(v);
    EXPECT_DOUBLE_EQ(*std::min_element(w.begin(), w.end()), quantile(v, 0.10));
    EXPECT_DOUBLE_EQ(*std::max_element(w.begin(), w.end()), quantile(v, 0.90));
  }
}

TEST(Skewness, Examples) {
  EXPECT_NEAR(skewness(std::vector<double>{1, 2, 3}), 0.0, 1e-15);
  // m2 = 0.1875, m3 = 0.09375
  EXPECT_NEAR(skewness(std::vector<double>{0, 0, 0, 1}), 0.09375 / std::pow(0.1875, 1.5), 1e-12);
  EXPECT_NEAR(skewness(std::vector<double>{0, 0, 0, 1}), 1.1547, 1e-4);
}

TEST(Skewness, MirrorAntisymmetry) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(50), neg(50);
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = rng.lognormal(0, 0.8);
      neg[k] = -v[k];
    }
    EXPECT_NEAR(skewness(neg), -skewness(v), 1e-9);
  }
}

TEST(Skewness, DegenerateColumns) {
  EXPECT_THROW(skewness(std::vector<double>(10, 2.0)), Error);
  EXPECT_THROW(skewness(std::vector<double>{1, 2}), Error);
  EXPECT_FALSE(try_skewness(std::vector<double>(10, 2.0)));
}

TEST(RankTransform, Examples) {
  const auto r = quantile_normalize(std::vector<double>{5, 1, 3});
  EXPECT_NEAR(r[0], 2.5 / 3, 1e-12);
  EXPECT_NEAR(r[1], 0.5 / 3, 1e-12);
  EXPECT_NEAR(r[2], 0.5, 1e-12);
  EXPECT_EQ(quantile_normalize(std::vector<double>{2, 2}), (std::vector<double>{0.5, 0.5}));
}

TEST(RankTransform, StrictlyIncreasingStaysIncreasing) {
  Rng rng(12);
  std::vector<double> v{rng.normal()};
  for (int i = 0; i < 200; ++i) v.push_back(v.back() + rng.uniform(1e-6, 3.0));
  const auto r = quantile_normalize(v);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_LT(r[i - 1], r[i]);
  for (double x : r) EXPECT_TRUE(x > 0.0 && x < 1.0);
}

TEST(Pipeline, LogNormalSkewIsTamed) {
  const auto col = lognormal_column(2024, 7794, 1.5);
  const auto m = matrix_with({col}, {"distance_km"});
  const auto [out, report] = preprocess_matrix(m, std::vector<std::string>{"distance_km"});
  ASSERT_EQ(report.columns.size(), 1u);
  EXPECT_GT(*report.columns[0].skewness_before, 5.0);
  EXPECT_LT(std::abs(*report.columns[0].skewness_after), 1.0);
}

TEST(Pipeline, WinsorizingDoesNotRaiseSkewOfHeavyTails) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<double> logn(2000), pareto(2000);
    for (std::size_t i = 0; i < logn.size(); ++i) {
      logn[i] = rng.lognormal(0.0, 1.2);
      pareto[i] = std::pow(1.0 - rng.uniform(), -1.0 / 2.5);
    }
    EXPECT_LE(std::abs(skewness(winsorize(logn))), std::abs(skewness(logn)));
    EXPECT_LE(std::abs(skewness(winsorize(pareto))), std::abs(skewness(pareto)));
  }
}

TEST(Pipeline, CategoricalColumnsUntouched) {
  Rng rng(5);
  std::vector<double> cat(300), cont(300);
  for (std::size_t i = 0; i < cat.size(); ++i) {
    cat[i] = static_cast<double>(1 + rng.below(6));
    cont[i] = rng.lognormal(0, 1);
  }
  const auto m = matrix_with({cat, cont}, {"race", "rpm"});
  const auto [out, report] = preprocess_matrix(m, std::vector<std::string>{"rpm"});
  EXPECT_EQ(out.column(0), m.column(0));
  for (double v : out.column(1)) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  EXPECT_EQ(out.labels, m.labels);
  EXPECT_EQ(out.participant_ids, m.participant_ids);
  EXPECT_EQ(out.trip_ids, m.trip_ids);
}

TEST(Pipeline, IdempotentOnRanks) {
  const auto m = matrix_with({lognormal_column(8, 400, 1.0), lognormal_column(9, 400, 2.0)}, {"speed_kmh", "rpm"});
  const std::vector<std::string> cols{"speed_kmh", "rpm"};
  const auto once = preprocess_matrix(m, cols).first;
  const auto twice = preprocess_matrix(once, cols).first;
  for (std::size_t i = 0; i < once.data.size(); ++i) EXPECT_NEAR(once.data[i], twice.data[i], 1e-12);
}

TEST(Pipeline, ReportCountsClampedValues) {
  const auto m = matrix_with({one_to_ten()}, {"rpm"});
  const auto [out, report] = preprocess_matrix(m, std::vector<std::string>{"rpm"});
  EXPECT_NEAR(report.columns[0].floor_value, 1.9, 1e-12);
  EXPECT_NEAR(report.columns[0].cap_value, 9.1, 1e-12);
  EXPECT_EQ(report.columns[0].n_floored, 1u);
  EXPECT_EQ(report.columns[0].n_capped, 1u);
  EXPECT_TRUE(report.to_json().contains("rpm"));
}

TEST(ColumnTransformTest, TrainingColumnMatchesBatchTransform) {
  const auto col = lognormal_column(31, 1000, 1.3);
  const auto t = ColumnTransform::fit(col);
  const auto batch = quantile_normalize(winsorize(col));
  for (std::size_t i = 0; i < col.size(); ++i) EXPECT_NEAR(t.apply(col[i]), batch[i], 1e-12);
}

TEST(ColumnTransformTest, UnseenValuesInterpolateAndClamp) {
  const auto t = ColumnTransform::fit(one_to_ten());
  const double at5 = t.apply(5.0), at6 = t.apply(6.0);
  EXPECT_NEAR(t.apply(5.5), (at5 + at6) / 2.0, 1e-12);
  EXPECT_EQ(t.apply(-100.0), t.apply(1.9));
  EXPECT_EQ(t.apply(1e9), t.apply(9.1));
  for (double v : {-1e9, 0.0, 3.3, 7.7, 1e9}) EXPECT_TRUE(t.apply(v) >= 0.0 && t.apply(v) <= 1.0);
}

TEST(ColumnTransformTest, MonotoneNonDecreasing) {
  const auto t = ColumnTransform::fit(lognormal_column(77, 300, 1.0));
  double prev = -1.0;
  for (double v = 0.0; v < 20.0; v += 0.01) {
    const double y = t.apply(v);
    EXPECT_GE(y, prev);
    prev = y;
  }
}
