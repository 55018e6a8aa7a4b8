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

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hlgen/autodiff/tensor.hpp"
#include "hlgen/error.hpp"

namespace hlgen::ad {

/// A named trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Ordered collection of parameters. Handles are indices, so copies of a
/// model stay self-consistent.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    Tensor grad = Tensor::zeros_like(value);
    params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
    return params_.size() - 1;
  }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const noexcept { return params_.size(); }

  Parameter* find(std::string_view name) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Parameter* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  Parameter& get(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw Error("unknown parameter: " + std::string(name));
  }
  const Parameter& get(std::string_view name) const {
    if (const auto* p = find(name)) return *p;
    throw Error("unknown parameter: " + std::string(name));
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Uniform initialization in [-scale, scale], parameters visited in insertion order.
  void init_uniform(std::uint64_t seed, double scale = 0.1) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      for (double& v : p.value.data()) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = (2.0 * u - 1.0) * scale;
      }
    }
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

using ForwardFn = std::function<Tensor(const std::vector<const Tensor*>& in)>;
/// Accumulates input adjoints. `grad_in[i]` is null when input i needs no gradient.
using BackwardFn = std::function<void(const std::vector<const Tensor*>& in, const Tensor& out,
                                      const Tensor& grad_out,
                                      const std::vector<Tensor*>& grad_in)>;

/// Reverse-mode tape. Nodes are appended in creation order, which is a
/// topological order; forward values are computed eagerly and can be
/// recomputed with `evaluate` after parameters or inputs change.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{this, it->second};
    Node n;
    n.op = "param";
    n.value = p.value;
    n.requires_grad = true;
    n.param = &p;
    const std::size_t id = push(std::move(n));
    param_nodes_.emplace(&p, id);
    return Var{this, id};
  }

  /// Named input leaf that can be rebound by `evaluate`.
  Var input(std::string name, Tensor value) {
    Node n;
    n.op = "input";
    n.value = std::move(value);
    n.input_name = std::move(name);
    return Var{this, push(std::move(n))};
  }

  Var constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    return Var{this, push(std::move(n))};
  }

  Var apply(std::string_view op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward) {
    Node n;
    n.op = op;
    n.inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
      if (v.graph != this) throw Error(std::string(op) + ": input belongs to another graph");
      n.inputs.push_back(v.id);
      n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    }
    n.forward = std::move(forward);
    n.backward = std::move(backward);
    const std::size_t id = nodes_.size();
    n.value = run_forward(id, n);
    return Var{this, push(std::move(n))};
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const { return nodes_.at(id).grad; }
  std::string_view op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Recomputes every node from current parameter values and the given input
  /// bindings (unbound inputs keep their previous value).
  void evaluate(const std::map<std::string, Tensor>& bindings = {}) {
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      Node& n = nodes_[id];
      if (n.param) {
        n.value = n.param->value;
      } else if (!n.input_name.empty()) {
        auto it = bindings.find(n.input_name);
        if (it != bindings.end()) {
          if (it->second.shape() != n.value.shape()) {
            throw ShapeError("shape mismatch at node " + std::to_string(id) + " (input '" +
                             n.input_name + "'): bound " + shape_str(it->second.shape()) +
                             ", expected " + shape_str(n.value.shape()));
          }
          n.value = it->second;
        }
      } else if (n.forward) {
        n.value = run_forward(id, n);
      }
    }
  }

  /// Propagates d(output)/d(node) for every node and accumulates the result
  /// into the `grad` of each bound parameter. Parameters not reachable from
  /// `output` receive nothing.
  void backward(Var output) {
    if (output.graph != this) throw Error("backward: output belongs to another graph");
    Node& root = nodes_.at(output.id);
    if (!root.value.is_scalar()) {
      throw ShapeError("backward requires a scalar output, got shape " +
                       shape_str(root.value.shape()));
    }
    for (Node& n : nodes_) n.has_grad = false;
    root.grad = Tensor::scalar(1.0);
    root.has_grad = true;

    std::vector<const Tensor*> in;
    std::vector<Tensor*> gin;
    for (std::size_t id = output.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.has_grad || !n.requires_grad) continue;
      if (n.param) {
        n.param->grad += n.grad;
        continue;
      }
      if (!n.backward) continue;
      in.clear();
      gin.clear();
      for (std::size_t src : n.inputs) {
        Node& s = nodes_[src];
        in.push_back(&s.value);
        if (s.requires_grad) {
          if (!s.has_grad) {
            s.grad = Tensor::zeros_like(s.value);
            s.has_grad = true;
          }
          gin.push_back(&s.grad);
        } else {
          gin.push_back(nullptr);
        }
      }
      n.backward(in, n.value, n.grad, gin);
    }
  }

 private:
  struct Node {
    std::string_view op;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    ForwardFn forward;
    BackwardFn backward;
    Parameter* param = nullptr;
    std::string input_name;
  };

  std::size_t push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Tensor run_forward(std::size_t id, const Node& n) const {
    std::vector<const Tensor*> in;
    in.reserve(n.inputs.size());
    for (std::size_t src : n.inputs) in.push_back(&nodes_[src].value);
    Tensor out;
    try {
      out = n.forward(in);
    } catch (const ShapeError& e) {
      throw ShapeError("shape mismatch at node " + std::to_string(id) + " (" +
                       std::string(n.op) + "): " + e.what());
    }
    if (!out.all_finite()) {
      throw NumericError("numeric overflow at node " + std::to_string(id) + " (" +
                         std::string(n.op) + ")");
    }
    return out;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace hlgen::ad
