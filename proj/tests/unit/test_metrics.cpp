#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pavepci/metrics.hpp"
#include "pavepci/random.hpp"

namespace pavepci {
namespace {

using V = std::vector<double>;

// Naive scalar-loop oracles.
double oracle_mae(const V& y, const V& p) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] > p[i] ? y[i] - p[i] : p[i] - y[i];
  return s / y.size();
}
double oracle_rmse(const V& y, const V& p) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - p[i]) * (y[i] - p[i]);
  return std::sqrt(s / y.size());
}
double oracle_mape(const V& y, const V& p, double floor, std::size_t* excluded) {
  double s = 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= floor) {
      s += (y[i] > p[i] ? y[i] - p[i] : p[i] - y[i]) / y[i];
      ++m;
    }
  }
  *excluded = y.size() - m;
  return 100.0 * s / m;
}
double oracle_r2(const V& y, const V& p) {
  double mean = 0;
  for (double v : y) mean += v;
  mean /= y.size();
  double sst = 0, sse = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sst += (y[i] - mean) * (y[i] - mean);
    sse += (y[i] - p[i]) * (y[i] - p[i]);
  }
  return 1.0 - sse / sst;
}

bool close(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

TEST(Metrics, Mae) {
  EXPECT_EQ(mae(V{10, 20}, V{12, 24}), 3.0);
  EXPECT_EQ(mae(V{100}, V{94}), 6.0);
  EXPECT_EQ(mae(V{5, 6, 7}, V{5, 6, 7}), 0.0);
}

TEST(Metrics, Mape) {
  const auto a = mape(V{100, 50}, V{90, 55});
  EXPECT_DOUBLE_EQ(a.value, 10.0);
  EXPECT_EQ(a.excluded, 0u);
  const auto b = mape(V{0, 100}, V{5, 100}, 1.0);
  EXPECT_EQ(b.value, 0.0);
  EXPECT_EQ(b.excluded, 1u);
  EXPECT_EQ(mape(V{40, 60}, V{40, 60}).value, 0.0);
  EXPECT_THROW(mape(V{0, 0.5}, V{1, 1}), UndefinedMetricError);
}

TEST(Metrics, Rmse) {
  EXPECT_NEAR(rmse(V{0, 0}, V{3, 4}), 3.5355, 1e-4);
  EXPECT_EQ(rmse(V{1, 2}, V{1, 2}), 0.0);
  EXPECT_DOUBLE_EQ(rmse(V{10, 20, 30}, V{13, 17, 33}), 3.0);
  EXPECT_DOUBLE_EQ(mae(V{10, 20, 30}, V{13, 17, 33}), 3.0);
}

TEST(Metrics, RSquared) {
  EXPECT_EQ(r_squared(V{1, 2, 3}, V{1, 2, 3}), 1.0);
  EXPECT_EQ(r_squared(V{1, 2, 3}, V{2, 2, 2}), 0.0);
  EXPECT_THROW(r_squared(V{4, 4, 4}, V{1, 2, 3}), UndefinedMetricError);
  EXPECT_THROW(r_squared(V{4}, V{4}), UndefinedMetricError);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(mae(V{}, V{}), UndefinedMetricError);
  EXPECT_THROW(rmse(V{1, 2}, V{1}), InputError);
  EXPECT_THROW(mae(V{1, NAN}, V{1, 2}), InputError);
}

TEST(Metrics, MatchScalarOraclesOnRandomSets) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    V y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.uniform(0.0, 100.0);
      p[i] = rng.uniform(0.0, 100.0);
    }
    y[0] = 0.25;  // always below the MAPE floor
    std::size_t excl = 0;
    const double om = oracle_mape(y, p, 1.0, &excl);
    ASSERT_TRUE(close(mae(y, p), oracle_mae(y, p)));
    ASSERT_TRUE(close(rmse(y, p), oracle_rmse(y, p)));
    const auto m = mape(y, p);
    ASSERT_TRUE(close(m.value, om));
    ASSERT_EQ(m.excluded, excl);
    ASSERT_TRUE(close(r_squared(y, p), oracle_r2(y, p)));
    ASSERT_LE(mae(y, p), rmse(y, p));
  }
}

TEST(Metrics, PermutationInvariant) {
  V y{10, 20, 30, 45, 80}, p{12, 18, 35, 40, 90};
  V y2{45, 10, 80, 30, 20}, p2{40, 12, 90, 35, 18};
  EXPECT_DOUBLE_EQ(mae(y, p), mae(y2, p2));
  EXPECT_DOUBLE_EQ(rmse(y, p), rmse(y2, p2));
  EXPECT_DOUBLE_EQ(mape(y, p).value, mape(y2, p2).value);
  EXPECT_DOUBLE_EQ(r_squared(y, p), r_squared(y2, p2));
}

TEST(Metrics, ReportJsonRoundTrip) {
  const V y{100, 62, 25, 0}, p{97, 63, 36, 4};
  const MetricReport r = evaluate_metrics(y, p, 1.0, "resnet50_cbam");
  EXPECT_EQ(r.n, 4u);
  EXPECT_EQ(r.mape_excluded, 1u);
  ASSERT_TRUE(r.r2.has_value());
  const MetricReport back = metric_report_from_json(to_json(r));
  EXPECT_EQ(back.model, "resnet50_cbam");
  EXPECT_EQ(back.rmse, r.rmse);
  EXPECT_EQ(back.mae, r.mae);
  EXPECT_EQ(back.mape, r.mape);
  EXPECT_EQ(back.r2, r.r2);
  EXPECT_EQ(back.n, 4u);

  const MetricReport constant = evaluate_metrics(V{50, 50}, V{50, 50});
  EXPECT_FALSE(constant.r2.has_value());
  EXPECT_NE(to_json(constant).find("\"r2\": null"), std::string::npos);
  EXPECT_THROW(metric_report_from_json("{}"), LoadError);
}

}  // namespace
}  // namespace pavepci
