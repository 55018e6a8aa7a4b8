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

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hlgen/autodiff/graph.hpp"
#include "hlgen/autodiff/tensor.hpp"
#include "hlgen/error.hpp"

namespace hlgen::ad {

inline double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const auto& g : grads) s += squared_norm(g);
  return std::sqrt(s);
}

/// If the joint l2 norm g of `grads` exceeds `max_norm`, scales every tensor by max_norm / g.
inline std::vector<Tensor> clip_by_global_norm(std::vector<Tensor> grads, double max_norm) {
  if (!(max_norm > 0)) throw Error("clip_by_global_norm: max_norm must be positive");
  const double g = global_norm(grads);
  if (g > max_norm) {
    const double f = max_norm / g;
    for (auto& t : grads)
      for (double& v : t.data()) v *= f;
  }
  return grads;
}

/// In-place clipping of the gradients held by `params`. Returns the norm before clipping.
inline double clip_grad_norm(ParameterSet& params, double max_norm) {
  if (!(max_norm > 0)) throw Error("clip_grad_norm: max_norm must be positive");
  double s = 0.0;
  for (const auto& p : params) s += squared_norm(p.grad);
  const double g = std::sqrt(s);
  if (g > max_norm) {
    const double f = max_norm / g;
    for (auto& p : params)
      for (double& v : p.grad.data()) v *= f;
  }
  return g;
}

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One bias-corrected Adam update using each parameter's accumulated grad.
inline void adam_step(ParameterSet& params, AdamState& state, double lr) {
  if (!(lr >= 0)) throw Error("adam_step: negative learning rate");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (auto& p : params) {
    auto [mit, mnew] = state.m.try_emplace(p.name, p.value.shape());
    auto [vit, vnew] = state.v.try_emplace(p.name, p.value.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != p.value.shape()) throw ShapeError("adam moment shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g;
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }
}

inline void sgd_step(ParameterSet& params, double lr) {
  for (auto& p : params)
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
}

enum class OptimizerKind { adam, sgd };

/// Learning rate plus optimizer state for one parameter set.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(ParameterSet& params) {
    if (kind_ == OptimizerKind::adam) {
      adam_step(params, adam_, lr_);
    } else {
      sgd_step(params, lr_);
    }
  }

  OptimizerKind kind() const noexcept { return kind_; }
  double lr() const noexcept { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const AdamState& adam_state() const noexcept { return adam_; }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamState adam_;
};

}  // namespace hlgen::ad
