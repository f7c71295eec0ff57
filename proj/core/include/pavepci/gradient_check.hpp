#pragma once

#include <cstdint>
#include <string>

#include "pavepci/errors.hpp"
#include "pavepci/layers.hpp"

namespace pavepci {

// Raised when an analytic or numeric gradient is not finite.
class GradientCheckError : public Error {
 public:
  using Error::Error;
};

struct GradientCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  bool check_parameters = true;
  // 0 checks d sum(op(x)); otherwise the scalar is sum(r * op(x)) with r drawn
  // from this seed, which keeps layers whose outputs sum to a constant
  // (batch norm) from passing vacuously.
  std::uint64_t projection_seed = 0;
  // |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-6;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_coordinate;
  std::size_t coordinates_checked = 0;
  double tolerance = 0.0;
  bool passed = false;
};

// Compares analytic input and parameter gradients of a scalar reduction of
// op(input) with central finite differences. The module is put in training
// mode. Throws GradientCheckError naming the coordinate on a non-finite
// gradient.
GradientCheckReport gradient_check(Module<double>& op, const Tensor<double>& input,
                                   const GradientCheckOptions& options = {});

}  // namespace pavepci
