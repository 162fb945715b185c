// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dbt/error.hpp"

namespace dbt {

GradCheckResult grad_check(const std::function<Var()>& loss,
                           const std::vector<Var>& params,
                           const GradCheckOptions& opts) {
  for (Var p : params) p.zero_grad();
  {
    Var l = loss();
    backward(l);
  }
  std::vector<std::pair<std::size_t, std::size_t>> sites;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].numel(); ++i) sites.emplace_back(p, i);
  require(!sites.empty(), ErrorCode::kInvalidArgument,
          "grad_check: no parameters");
  if (opts.samples > 0 && opts.samples < sites.size()) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(sites.begin(), sites.end(), rng);
    sites.resize(opts.samples);
  }

  GradCheckResult res;
  NoGradGuard no_grad;
  for (auto [p, i] : sites) {
    Var param = params[p];
    const Tensor& g = param.grad();
    const double analytic = g.empty() ? 0.0 : g[i];
    double& w = param.mutable_value().data()[i];
    const double saved = w;
    w = saved + opts.step;
    const double up = loss().value()[0];
    w = saved - opts.step;
    const double down = loss().value()[0];
    w = saved;
    const double numeric = (up - down) / (2.0 * opts.step);
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), opts.floor});
    GradProbe probe{p, i, analytic, numeric,
                    std::abs(analytic - numeric) / denom};
    res.max_rel_error = std::max(res.max_rel_error, probe.rel_error);
    res.probes.push_back(probe);
  }
  return res;
}

}  // namespace dbt
