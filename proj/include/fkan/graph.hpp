#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <initializer_list>
#include <string>

#include "fkan/tensor.hpp"

namespace fkan {

/// Runtime numeric assertions (singular divisions, non-finite forward results).
/// On by default in builds without NDEBUG.
bool debug_checks();
void set_debug_checks(bool enabled);

class ScopedDebugChecks {
 public:
  explicit ScopedDebugChecks(bool enabled) : previous_(debug_checks()) { set_debug_checks(enabled); }
  ~ScopedDebugChecks() { set_debug_checks(previous_); }
  ScopedDebugChecks(const ScopedDebugChecks&) = delete;
  ScopedDebugChecks& operator=(const ScopedDebugChecks&) = delete;

 private:
  bool previous_;
};

/// A trainable tensor that outlives individual graphs.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<Scalar>::zeros(value.shape())) {}

  void zero_grad() { grad = Tensor<Scalar>::zeros(value.shape()); }
};

template <typename Scalar>
class Graph;

using NodeId = std::size_t;

/// Handle to a node of a Graph.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  NodeId id = 0;

  const Tensor<Scalar>& value() const { return graph->value(*this); }
  const Shape& shape() const { return value().shape(); }
  Index dim(Index axis) const { return value().dim(axis); }
};

/// Tape of executed primitives. One graph per batch; parameters persist
/// across graphs and receive accumulated gradients on backward().
template <typename Scalar>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor<Scalar>& out_grad)>;

  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracking() const { return track_; }

  /// Constant input; never receives a gradient.
  Var<Scalar> input(Tensor<Scalar> value) { return push(std::move(value), false, nullptr, nullptr); }

  /// Leaf whose gradient is retained in the graph (see grad_of).
  Var<Scalar> variable(Tensor<Scalar> value) { return push(std::move(value), track_, nullptr, nullptr); }

  /// Leaf bound to a persistent parameter; backward() adds into param.grad.
  Var<Scalar> parameter(Parameter<Scalar>& param) {
    return push(param.value, track_, nullptr, track_ ? &param : nullptr);
  }

  /// Records the result of a primitive. The backward rule runs only when some
  /// input requires a gradient.
  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs, BackwardFn backward) {
    bool needs = false;
    bool inputs_finite = true;
    for (const auto& in : inputs) {
      needs = needs || nodes_[in.id].requires_grad;
      if (debug_checks()) inputs_finite = inputs_finite && nodes_[in.id].value.all_finite();
    }
    if (debug_checks() && inputs_finite && !value.all_finite()) {
      throw NumericalError("non-finite result from finite inputs at node " + std::to_string(nodes_.size()));
    }
    needs = needs && track_;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr, nullptr);
  }

  const Tensor<Scalar>& value(Var<Scalar> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<Scalar> v) const { return nodes_.at(v.id).requires_grad; }

  /// Mutable gradient buffer of a node, zero-initialised on first access.
  Tensor<Scalar>& grad(Var<Scalar> v) {
    Node& node = nodes_.at(v.id);
    if (node.grad.size() != node.value.size() || node.grad.shape() != node.value.shape()) {
      node.grad = Tensor<Scalar>::zeros(node.value.shape());
    }
    return node.grad;
  }

  /// Gradient accumulated at a node after backward(); zeros if untouched.
  Tensor<Scalar> grad_of(Var<Scalar> v) const {
    const Node& node = nodes_.at(v.id);
    if (node.grad.shape() != node.value.shape()) return Tensor<Scalar>::zeros(node.value.shape());
    return node.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var<Scalar> loss) {
    if (backward_done_) throw GraphError("backward() called twice on the same graph");
    if (!track_) throw GraphError("backward() on a graph built without gradient tracking");
    if (value(loss).size() != 1) {
      throw GraphError("backward() requires a scalar loss, got shape " + to_string(value(loss).shape()));
    }
    backward_done_ = true;
    if (!nodes_[loss.id].requires_grad) return;
    grad(loss).array().setOnes();
    for (NodeId id = loss.id + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.requires_grad || node.grad.shape() != node.value.shape()) continue;
      if (node.backward) node.backward(*this, node.grad);
      if (node.sink != nullptr) node.sink->grad.array() += node.grad.array();
    }
  }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<Scalar>* sink = nullptr;
  };

  Var<Scalar> push(Tensor<Scalar> value, bool requires_grad, BackwardFn backward, Parameter<Scalar>* sink) {
    nodes_.push_back(Node{std::move(value), Tensor<Scalar>{}, requires_grad, std::move(backward), sink});
    return Var<Scalar>{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
  bool track_;
  bool backward_done_ = false;
};

}  // namespace fkan
