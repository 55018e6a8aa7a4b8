// Copyright 2026 The hlgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>

#include "hlgen/autodiff/graph.hpp"

namespace hlgen::ad {

/// Largest relative disagreement between the backward-pass gradient of the
/// scalar `loss` w.r.t. `param` and a central finite difference of step `eps`:
///   max_i |analytic_i - numeric_i| / max(1e-8, |analytic_i| + |numeric_i|)
/// The graph is re-evaluated for every perturbation and restored afterwards.
/// The parameter's accumulated grad is left unchanged.
inline double grad_check(Graph& graph, Var loss, Parameter& param, double eps = 1e-5) {
  const Tensor saved_grad = param.grad;
  param.grad.fill(0.0);
  graph.evaluate();
  graph.backward(loss);
  const Tensor analytic = param.grad;
  param.grad = saved_grad;

  double worst = 0.0;
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double orig = param.value[i];
    param.value[i] = orig + eps;
    graph.evaluate();
    const double up = loss.item();
    param.value[i] = orig - eps;
    graph.evaluate();
    const double down = loss.item();
    param.value[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  graph.evaluate();
  return worst;
}

}  // namespace hlgen::ad
