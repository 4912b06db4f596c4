#pragma once

#include "sqt/core/tensor.hpp"

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sqt {

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  Index id = -1;

  const Matrix<Scalar>& value() const { return graph->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const { return graph->requires_grad(id); }
  Scalar item() const { return value()(0, 0); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape is
/// already topologically sorted and backward walks it in reverse.
template <typename Scalar>
class Graph {
 public:
  using Backward = std::function<void()>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  /// When set, every op output is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

  Var<Scalar> constant(Matrix<Scalar> value) { return emplace(std::move(value), false, nullptr); }

  /// Leaf bound to a parameter. Repeated calls with the same parameter return
  /// the same node so every use shares one storage and one gradient.
  Var<Scalar> param(Parameter<Scalar>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<Scalar>{this, it->second};
    auto v = emplace(p.value, record_, nullptr);
    nodes_[v.id].param = &p;
    param_nodes_[&p] = v.id;
    return v;
  }

  /// Appends an op output. `backward` is dropped unless some input needs grad.
  Var<Scalar> record(Matrix<Scalar> value, bool any_input_requires_grad, Backward backward) {
    if (check_finite_) require_finite(value, "op output");
    bool rg = record_ && any_input_requires_grad;
    return emplace(std::move(value), rg, rg ? std::move(backward) : nullptr);
  }

  const Matrix<Scalar>& value(Index id) const { return nodes_[id].value; }
  bool requires_grad(Index id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Matrix<Scalar>& grad(Index id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(Index id) const { return nodes_[id].grad.size() != 0; }

  template <typename Derived>
  void accumulate(Index id, const Eigen::MatrixBase<Derived>& g) {
    if (!nodes_[id].requires_grad) return;
    grad(id) += g;
  }

  /// Propagates d(loss)/d(node) to every reachable node and adds the result
  /// into the bound parameters' `grad` buffers.
  void backward(Var<Scalar> loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw DimensionError("backward requires a scalar loss, got " + shape_string(loss.value()));
    }
    if (!record_) throw std::logic_error("backward on a graph built without recording");
    grad(loss.id)(0, 0) += Scalar(1);
    for (Index i = loss.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward();
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter<Scalar>* param = nullptr;
  };

  Var<Scalar> emplace(Matrix<Scalar> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix<Scalar>(), requires_grad, std::move(backward), nullptr});
    return Var<Scalar>{this, static_cast<Index>(nodes_.size() - 1)};
  }

  bool record_;
  bool check_finite_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, Index> param_nodes_;
};

}  // namespace sqt
