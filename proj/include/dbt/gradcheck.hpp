// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Central finite-difference check of reverse-mode gradients.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dbt/autograd.hpp"

namespace dbt {

struct GradProbe {
  std::size_t param = 0;  // index into the parameter list
  std::size_t index = 0;  // flat element index
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  std::vector<GradProbe> probes;
  double max_rel_error = 0.0;
};

struct GradCheckOptions {
  double step = 1e-6;
  // Denominator floor so that near-zero gradients compare absolutely.
  double floor = 1e-6;
  std::size_t samples = 0;  // 0 = every element
  std::uint64_t seed = 1;
};

// `loss` must rebuild the graph from the current parameter values on every
// call and return a single-element Var.
GradCheckResult grad_check(const std::function<Var()>& loss,
                           const std::vector<Var>& params,
                           const GradCheckOptions& opts = {});

}  // namespace dbt
