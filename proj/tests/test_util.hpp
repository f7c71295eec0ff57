#pragma once

#include <cstdint>

#include "pavepci/random.hpp"
#include "pavepci/tensor.hpp"

namespace pavepci::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  Rng rng(seed);
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
void fill_random(Tensor<T>& t, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(lo, hi));
}

}  // namespace pavepci::testing
