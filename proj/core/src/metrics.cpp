#include "pavepci/metrics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

namespace pavepci {

namespace {

void check(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.size() != yhat.size()) {
    throw InputError(std::string(what) + ": " + std::to_string(y.size()) + " actual vs " +
                     std::to_string(yhat.size()) + " predicted values");
  }
  if (y.empty()) throw UndefinedMetricError(std::string(what) + " of an empty prediction set");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || !std::isfinite(yhat[i])) {
      throw InputError(std::string(what) + ": non-finite value at sample " + std::to_string(i));
    }
  }
}

double sse(std::span<const double> y, std::span<const double> yhat) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    s += e * e;
  }
  return s;
}

}  // namespace

double mae(std::span<const double> actual, std::span<const double> predicted) {
  check(actual, predicted, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(actual[i] - predicted[i]);
  return s / static_cast<double>(actual.size());
}

MapeResult mape(std::span<const double> actual, std::span<const double> predicted,
                double min_denominator) {
  check(actual, predicted, "mape");
  double s = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] < min_denominator) continue;
    s += std::abs(actual[i] - predicted[i]) / actual[i];
    ++used;
  }
  if (used == 0) {
    throw UndefinedMetricError("mape: every actual value is below the minimum denominator " +
                               std::to_string(min_denominator));
  }
  return {100.0 * s / static_cast<double>(used), actual.size() - used};
}

double rmse(std::span<const double> actual, std::span<const double> predicted) {
  check(actual, predicted, "rmse");
  return std::sqrt(sse(actual, predicted) / static_cast<double>(actual.size()));
}

double r_squared(std::span<const double> actual, std::span<const double> predicted) {
  check(actual, predicted, "r_squared");
  if (actual.size() < 2) throw UndefinedMetricError("r_squared needs at least 2 samples");
  double mean = 0.0;
  for (double v : actual) mean += v;
  mean /= static_cast<double>(actual.size());
  double sst = 0.0;
  for (double v : actual) sst += (v - mean) * (v - mean);
  if (sst == 0.0) throw UndefinedMetricError("r_squared: actual values have zero variance");
  return 1.0 - sse(actual, predicted) / sst;
}

MetricReport evaluate_metrics(std::span<const double> actual, std::span<const double> predicted,
                              double min_denominator, std::string model) {
  MetricReport r;
  r.model = std::move(model);
  r.n = actual.size();
  r.mae = mae(actual, predicted);
  r.rmse = rmse(actual, predicted);
  try {
    const MapeResult m = mape(actual, predicted, min_denominator);
    r.mape = m.value;
    r.mape_excluded = m.excluded;
  } catch (const UndefinedMetricError&) {
    r.mape_excluded = actual.size();
  }
  try {
    r.r2 = r_squared(actual, predicted);
  } catch (const UndefinedMetricError&) {
  }
  return r;
}

std::string to_json(const MetricReport& report) {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
  };
  ordered_json j;
  j["model"] = report.model;
  j["rmse"] = report.rmse;
  j["mae"] = report.mae;
  j["mape"] = opt(report.mape);
  j["mape_excluded"] = report.mape_excluded;
  j["r2"] = opt(report.r2);
  j["n"] = report.n;
  return j.dump(2) + "\n";
}

MetricReport metric_report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    auto opt = [&](const char* key) -> std::optional<double> {
      if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
      return j.at(key).get<double>();
    };
    MetricReport r;
    r.model = j.value("model", std::string());
    r.rmse = j.at("rmse").get<double>();
    r.mae = j.at("mae").get<double>();
    r.mape = opt("mape");
    r.mape_excluded = j.value("mape_excluded", std::size_t{0});
    r.r2 = opt("r2");
    r.n = j.value("n", std::size_t{0});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed metrics report: ") + e.what());
  }
}

}  // namespace pavepci
