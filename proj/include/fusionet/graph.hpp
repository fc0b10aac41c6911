#pragma once

#include "fusionet/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fusionet {

/// Misuse of the tape: backward twice, backward from a non-scalar, foreign handles.
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename Scalar>
class Graph;

/// Handle to one node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor<Scalar>& tensor() const { return graph->tensor(id); }
  const Matrix<Scalar>& value() const { return tensor().data(); }
  const Shape& shape() const { return tensor().shape(); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const { return graph->requires_grad(id); }
};

/// Append-only tape for reverse-mode differentiation.
///
/// Nodes are recorded in execution order, which is a topological order, so
/// backward simply walks the tape from the loss down to node 0. A tape is
/// consumed by one backward pass.
///
/// Any recorded value containing NaN or Inf sets a sticky fault flag naming the
/// producing op; callers poll faulted() after forward.
template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  using VarT = Var<Scalar>;
  /// Receives the node's upstream gradient and its own forward value, and
  /// pushes contributions into the op's inputs via accumulate().
  using BackwardFn = std::function<void(const Mat& upstream, const Mat& output, Graph& graph)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient. The value is copied into the tape.
  VarT constant(Tensor<Scalar> value) {
    Node node;
    node.op = "constant";
    node.owned = std::move(value);
    node.owned.set_requires_grad(false);
    return push(std::move(node));
  }

  VarT constant(Mat value) { return constant(Tensor<Scalar>::from_matrix(std::move(value))); }

  /// Leaf that references caller-owned data without copying; no gradient flows to it.
  VarT input(const Tensor<Scalar>& value) {
    Node node;
    node.op = "input";
    node.external = const_cast<Tensor<Scalar>*>(&value);
    node.external_readonly = true;
    return push(std::move(node));
  }

  /// Leaf bound to a trainable tensor. Backward accumulates straight into
  /// parameter.grad(), so gradients from several tapes add up there.
  VarT parameter(Tensor<Scalar>& parameter) {
    Node node;
    node.op = "parameter";
    node.external = &parameter;
    node.requires_grad = parameter.requires_grad();
    return push(std::move(node));
  }

  /// Records the result of an op. `inputs` drive requires_grad propagation.
  VarT record(std::string_view op, Tensor<Scalar> value, std::initializer_list<VarT> inputs,
              BackwardFn backward) {
    return record(op, std::move(value), std::vector<VarT>(inputs), std::move(backward));
  }

  VarT record(std::string_view op, Tensor<Scalar> value, const std::vector<VarT>& inputs,
              BackwardFn backward) {
    Node node;
    node.op = op;
    node.owned = std::move(value);
    for (const VarT& in : inputs) {
      check_owner(in);
      node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    if (!fault_ && !node.owned.all_finite()) {
      fault_ = true;
      fault_message_ = "non-finite value produced by '" + std::string(op) + "' at node " +
                       std::to_string(nodes_.size());
    }
    return push(std::move(node));
  }

  const Tensor<Scalar>& tensor(int id) const { return nodes_.at(id).tensor(); }
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
  std::string_view op(int id) const { return nodes_.at(id).op; }

  /// Adds `delta` into the gradient of `target` if it participates in differentiation.
  template <typename Derived>
  void accumulate(VarT target, const Eigen::MatrixBase<Derived>& delta) {
    Node& node = nodes_[target.id];
    if (!node.requires_grad) return;
    Tensor<Scalar>& t = node.tensor();
    Mat& g = t.grad();
    g.noalias() += delta;
    node.reached = true;
  }

  /// Direct access to a gradient buffer for ops that scatter sparsely.
  Mat* gradient_buffer(VarT target) {
    Node& node = nodes_[target.id];
    if (!node.requires_grad) return nullptr;
    node.reached = true;
    return &node.tensor().grad();
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates in reverse tape order.
  void backward(VarT loss) {
    check_owner(loss);
    if (consumed_) throw GraphError("backward called on a consumed tape; run a new forward first");
    if (nodes_[loss.id].tensor().size() != 1) {
      throw GraphError("backward requires a 1-element loss, got shape " +
                       to_string(nodes_[loss.id].tensor().shape()));
    }
    consumed_ = true;
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].tensor().grad().setOnes();
    nodes_[loss.id].reached = true;
    for (int i = loss.id; i >= 0; --i) {
      Node& node = nodes_[i];
      if (!node.reached || !node.backward) continue;
      // Inputs always precede their consumer, so this buffer is final here.
      const Mat& upstream = node.tensor().grad();
      node.backward(upstream, node.tensor().data(), *this);
      ++local_gradients_;
    }
  }

  bool consumed() const { return consumed_; }
  bool faulted() const { return fault_; }
  const std::string& fault_message() const { return fault_message_; }
  std::size_t size() const { return nodes_.size(); }
  /// Number of per-node local-gradient evaluations performed by backward.
  std::size_t local_gradient_count() const { return local_gradients_; }
  /// Op nodes that would run a local gradient (reached from the loss or not).
  std::size_t differentiable_node_count() const {
    std::size_t n = 0;
    for (const Node& node : nodes_) n += node.backward ? 1 : 0;
    return n;
  }

 private:
  struct Node {
    std::string_view op;
    Tensor<Scalar> owned;
    Tensor<Scalar>* external = nullptr;
    bool external_readonly = false;
    bool requires_grad = false;
    bool reached = false;
    BackwardFn backward;

    Tensor<Scalar>& tensor() { return external ? *external : owned; }
    const Tensor<Scalar>& tensor() const { return external ? *external : owned; }
  };

  VarT push(Node node) {
    nodes_.push_back(std::move(node));
    return VarT{this, static_cast<int>(nodes_.size() - 1)};
  }

  void check_owner(VarT v) const {
    if (v.graph != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw GraphError("variable does not belong to this graph");
    }
  }

  std::deque<Node> nodes_;  // deque: references to node values survive later pushes
  bool consumed_ = false;
  bool fault_ = false;
  std::string fault_message_;
  std::size_t local_gradients_ = 0;
};

}  // namespace fusionet
