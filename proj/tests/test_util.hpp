// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <random>

#include "dbt/autograd.hpp"

namespace dbt::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = nd(rng);
  return t;
}

inline Var random_param(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  return Var(random_tensor(std::move(shape), rng, scale), true);
}

}  // namespace dbt::test
