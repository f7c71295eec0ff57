#include "pavepci/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pavepci/random.hpp"

namespace pavepci {

namespace {

double reduce(const Tensor<double>& y, const Tensor<double>& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += weights[i] * y[i];
  return acc;
}

std::string coordinate_name(const std::string& tensor, const Shape& s, std::size_t flat) {
  const std::size_t w = flat % s.w;
  const std::size_t h = (flat / s.w) % s.h;
  const std::size_t c = (flat / s.plane()) % s.c;
  const std::size_t n = flat / (s.plane() * s.c);
  return tensor + "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
         "," + std::to_string(w) + "]";
}

}  // namespace

GradientCheckReport gradient_check(Module<double>& op, const Tensor<double>& input,
                                   const GradientCheckOptions& options) {
  op.set_training(true);
  op.zero_grad();

  Tensor<double> x = input;
  Tensor<double> y = op.forward(x);
  Tensor<double> weights(y.shape(), 1.0);
  if (options.projection_seed != 0) {
    Rng rng(options.projection_seed);
    for (auto& v : weights.storage()) v = rng.uniform(-1.0, 1.0);
  }
  const Tensor<double> grad_input = op.backward(weights);

  struct Target {
    std::string name;
    Tensor<double>* value;
    Tensor<double> analytic;
  };
  std::vector<Target> targets;
  targets.push_back({"input", &x, grad_input});
  if (options.check_parameters) {
    for (auto& np : op.named_parameters()) {
      targets.push_back({np.name, &np.param->value, np.param->grad});
    }
  }

  GradientCheckReport report;
  report.tolerance = options.tolerance;
  for (Target& t : targets) {
    for (std::size_t i = 0; i < t.value->size(); ++i) {
      const double analytic = t.analytic[i];
      if (!std::isfinite(analytic)) {
        throw GradientCheckError("non-finite analytic gradient at " +
                                 coordinate_name(t.name, t.value->shape(), i));
      }
      double& slot = (*t.value)[i];
      const double saved = slot;
      slot = saved + options.step;
      const double plus = reduce(op.forward(x), weights);
      slot = saved - options.step;
      const double minus = reduce(op.forward(x), weights);
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      if (!std::isfinite(numeric)) {
        throw GradientCheckError("non-finite numeric gradient at " +
                                 coordinate_name(t.name, t.value->shape(), i));
      }
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coordinates_checked;
      if (rel > report.max_relative_error || report.worst_coordinate.empty()) {
        if (rel >= report.max_relative_error) {
          report.max_relative_error = rel;
          report.worst_coordinate = coordinate_name(t.name, t.value->shape(), i);
        }
      }
    }
  }
  // Leave the module's caches consistent with the unperturbed input.
  op.forward(x);
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace pavepci
