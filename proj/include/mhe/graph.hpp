// Copyright 2026 The MHE-SDC Authors
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

// Reverse-mode differentiation tape.
//
// A Graph is an append-only list of nodes. Every node stores its forward
// value and, for non-leaf nodes, a backward rule that maps the gradient of
// the node's output onto gradients of its inputs. Inputs always precede the
// node that consumes them, so append order is a topological order and a
// single reverse sweep computes all gradients.

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mhe/error.hpp"
#include "mhe/tensor.hpp"

namespace mhe {

using NodeId = std::size_t;

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, NodeId id) : graph_(graph), id_(id) {}

  const Tensor<T>& value() const { return graph_->value(id_); }
  const Dims& dims() const { return value().dims(); }
  NodeId id() const { return id_; }
  Graph<T>& graph() const { return *graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<T>* graph_ = nullptr;
  NodeId id_ = 0;
};

template <typename T>
class Gradients {
 public:
  Gradients(std::vector<std::optional<Tensor<T>>> grads, std::vector<Dims> dims)
      : grads_(std::move(grads)), dims_(std::move(dims)) {}

  // Gradient of the loss w.r.t. `v`; zeros if `v` did not influence it.
  Tensor<T> operator[](const Var<T>& v) const {
    const auto& g = grads_.at(v.id());
    return g ? *g : Tensor<T>::zeros(dims_.at(v.id()));
  }

 private:
  std::vector<std::optional<Tensor<T>>> grads_;
  std::vector<Dims> dims_;
};

template <typename T>
class Graph {
 public:
  // Receives the output gradient and a mask of inputs that need a
  // gradient; returns one tensor per input (entries with a false mask are
  // ignored and may be left default-constructed).
  using BackwardFn = std::function<std::vector<Tensor<T>>(
      const Tensor<T>& grad_out, const std::vector<bool>& needs)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{"leaf", std::move(value), {}, nullptr, requires_grad});
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  Var<T> record(std::string op, Tensor<T> value,
                const std::vector<Var<T>>& inputs, BackwardFn backward) {
    Node node{std::move(op), std::move(value), {}, std::move(backward), false};
    node.inputs.reserve(inputs.size());
    for (const Var<T>& in : inputs) {
      if (&in.graph() != this || in.id() >= nodes_.size()) {
        throw std::logic_error("graph: input of '" + node.op +
                               "' is not an earlier node of this graph");
      }
      node.inputs.push_back(in.id());
      node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Gradients<T> backward(const Var<T>& loss) const {
    if (&loss.graph() != this) {
      throw std::logic_error("graph: loss belongs to another graph");
    }
    if (loss.value().numel() != 1) {
      throw InvalidArgument("backward: loss must be scalar, got shape " +
                            dims_to_string(loss.dims()));
    }
    std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
    grads[loss.id()] = Tensor<T>::full(loss.dims(), T{1});

    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      const Node& node = nodes_[i];
      if (!grads[i] || !node.requires_grad || !node.backward) continue;
      std::vector<bool> needs(node.inputs.size());
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        needs[k] = nodes_[node.inputs[k]].requires_grad;
      }
      std::vector<Tensor<T>> in_grads = node.backward(*grads[i], needs);
      if (in_grads.size() != node.inputs.size()) {
        throw std::logic_error("graph: backward of '" + node.op +
                               "' returned wrong arity");
      }
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (!needs[k]) continue;
        NodeId src = node.inputs[k];
        if (src >= i) throw std::logic_error("graph: cycle detected");
        require_same_dims(in_grads[k].dims(), nodes_[src].value.dims(),
                          node.op.c_str());
        if (grads[src]) {
          grads[src]->add_inplace(in_grads[k]);
        } else {
          grads[src] = std::move(in_grads[k]);
        }
      }
    }

    std::vector<Dims> dims;
    dims.reserve(nodes_.size());
    for (const Node& n : nodes_) dims.push_back(n.value.dims());
    return Gradients<T>(std::move(grads), std::move(dims));
  }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

}  // namespace mhe
