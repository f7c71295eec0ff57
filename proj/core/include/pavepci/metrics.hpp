#pragma once

// Regression metrics over (actual, predicted) pairs.

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "pavepci/errors.hpp"

namespace pavepci {

inline constexpr double kDefaultMapeMinDenominator = 1.0;

// Mean absolute error. Throws UndefinedMetricError on empty input and
// InputError on length mismatch or non-finite values (as do all below).
double mae(std::span<const double> actual, std::span<const double> predicted);

struct MapeResult {
  double value = 0.0;  // percent
  std::size_t excluded = 0;
};

// 100/m * sum |y - yhat| / y over the m samples with y >= min_denominator.
// Throws UndefinedMetricError when every sample is excluded.
MapeResult mape(std::span<const double> actual, std::span<const double> predicted,
                double min_denominator = kDefaultMapeMinDenominator);

double rmse(std::span<const double> actual, std::span<const double> predicted);

// 1 - SSE/SST. Throws UndefinedMetricError for n < 2 or constant actuals.
double r_squared(std::span<const double> actual, std::span<const double> predicted);

struct MetricReport {
  std::string model;
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> mape;  // empty when every sample was excluded
  std::size_t mape_excluded = 0;
  std::optional<double> r2;    // empty when undefined
  std::size_t n = 0;
};

// All four metrics; undefined MAPE/R^2 are reported as empty rather than
// thrown.
MetricReport evaluate_metrics(std::span<const double> actual, std::span<const double> predicted,
                              double min_denominator = kDefaultMapeMinDenominator,
                              std::string model = "");

// {"model":..,"rmse":..,"mae":..,"mape":..,"mape_excluded":..,"r2":..,"n":..}
// with null for undefined values. Numbers use the shortest representation
// that parses back to the same double.
std::string to_json(const MetricReport& report);
// Throws LoadError on malformed input.
MetricReport metric_report_from_json(const std::string& text);

}  // namespace pavepci
