// dsq/graph.hpp

// Copyright 2026  The dsq Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef DSQ_GRAPH_HPP_
#define DSQ_GRAPH_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsq/rng.hpp"
#include "dsq/tensor.hpp"

namespace dsq {

/// A learnable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Named parameters in insertion order. Addresses are stable for the
/// lifetime of the set.
template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet &other) { *this = other; }
  ParameterSet &operator=(const ParameterSet &other) {
    if (this == &other) return *this;
    params_.clear();
    index_.clear();
    for (const auto &p : other.params_) Add(p.name, p.value);
    return *this;
  }
  ParameterSet(ParameterSet &&) = delete;
  ParameterSet &operator=(ParameterSet &&) = delete;

  Parameter<T> &Add(const std::string &name, Tensor<T> init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    Parameter<T> p{name, std::move(init), {}};
    p.grad = Tensor<T>(p.value.shape);
    params_.push_back(std::move(p));
    index_[name] = params_.size() - 1;
    return params_.back();
  }

  Parameter<T> &Get(const std::string &name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return params_[it->second];
  }
  const Parameter<T> &Get(const std::string &name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return params_[it->second];
  }
  bool Has(const std::string &name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t NumScalars() const {
    std::size_t n = 0;
    for (const auto &p : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void ZeroGrad() {
    for (auto &p : params_) p.grad.fill(T(0));
  }

  /// Copies values (not gradients) from a set with identical names/shapes.
  void CopyValuesFrom(const ParameterSet &other) {
    for (auto &p : params_) {
      const auto &q = other.Get(p.name);
      if (q.value.shape != p.value.shape)
        throw DimensionError("parameter " + p.name + " shape mismatch");
      p.value.data = q.value.data;
    }
  }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Graph;

/// Handle to a node of a Graph.
template <typename T>
struct Expr {
  Graph<T> *graph = nullptr;
  int id = -1;

  const Tensor<T> &value() const { return graph->value(id); }
  const Shape &shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const { return graph != nullptr && id >= 0; }
};

/// Records executed primitives in execution order and replays them backwards.
/// Node i only ever references nodes < i, so reverse index order is a valid
/// topological order for the backward pass.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph &, int)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter<T> *param = nullptr;
  };

  explicit Graph(bool training = false, std::uint64_t dropout_seed = 0)
      : training_(training), rng_(dropout_seed) {}

  Graph(const Graph &) = delete;
  Graph &operator=(const Graph &) = delete;

  bool training() const { return training_; }
  Rng &rng() { return rng_; }

  Expr<T> Constant(Tensor<T> value) { return Push(std::move(value), {}, nullptr); }

  /// Tracked input whose gradient can be read back with Grad().
  Expr<T> Leaf(Tensor<T> value) {
    Expr<T> e = Push(std::move(value), {}, nullptr);
    nodes_[e.id].requires_grad = true;
    return e;
  }

  /// Binds a parameter; repeated calls return the same node. Backward adds
  /// into Parameter::grad.
  Expr<T> Param(Parameter<T> &p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    Expr<T> e = Push(p.value, {}, nullptr);
    nodes_[e.id].requires_grad = true;
    nodes_[e.id].param = &p;
    param_nodes_[&p] = e.id;
    return e;
  }

  /// Appends a primitive. `fn` is dropped when no input is tracked.
  Expr<T> Push(Tensor<T> value, std::vector<int> inputs, BackwardFn fn) {
    if (!value.all_finite())
      throw NumericError("non-finite value produced at node " +
                         std::to_string(nodes_.size()));
    Node n;
    n.value = std::move(value);
    for (int i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    if (n.requires_grad) n.backward = std::move(fn);
    n.inputs = std::move(inputs);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T> &value(int id) const { return nodes_[id].value; }
  const Node &node(int id) const { return nodes_[id]; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of node `id`, zero-initialized on first use.
  Tensor<T> &GradBuffer(int id) {
    Node &n = nodes_[id];
    if (n.grad.shape != n.value.shape) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  bool HasGrad(int id) const { return nodes_[id].grad.shape == nodes_[id].value.shape; }

  void Backward(Expr<T> loss) {
    if (backward_done_) throw std::logic_error("Backward called twice on the same graph");
    if (loss.value().size() != 1)
      throw DimensionError("Backward needs a scalar loss, got " +
                           ShapeString(loss.shape()));
    if (!nodes_[loss.id].requires_grad)
      throw std::logic_error("Backward on a loss that is detached from every tracked leaf");
    backward_done_ = true;
    GradBuffer(loss.id).data[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node &n = nodes_[i];
      if (!n.requires_grad || !HasGrad(i)) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        auto &g = n.param->grad.data;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data[k];
      }
    }
  }

  /// Gradient of the last Backward() with respect to `e` (zeros if unreached).
  Tensor<T> Grad(Expr<T> e) const {
    if (HasGrad(e.id)) return nodes_[e.id].grad;
    return Tensor<T>(nodes_[e.id].value.shape);
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T> *, int> param_nodes_;
  bool training_;
  bool backward_done_ = false;
  Rng rng_;
};

}  // namespace dsq

#endif  // DSQ_GRAPH_HPP_
