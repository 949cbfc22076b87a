#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "tripletlens/tensor.hpp"

namespace tl::nd {

enum class OpKind : std::uint8_t {
  Leaf,
  Conv2d,
  MaxPool2d,
  Relu,
  Linear,
  SquaredDistance,
  Add,
  Sub,
  AddScalar,
  Scale,
  Sum,
  MeanOf,
  Reshape,
  SelectRow,
  NormalizeRows,
  SoftmaxCrossEntropy,
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Append-only tape for reverse-mode differentiation. Nodes are stored in
/// creation order, so every node's inputs precede it and a single reverse
/// sweep visits each node once. Single-threaded.
class Graph {
 public:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::vector<int> inputs;
    Tensor value;
    const Tensor* ref = nullptr;  // leaf aliasing an external tensor
    Tensor* sink = nullptr;       // leaf that accumulates its gradient here
    bool needs_grad = false;
    Buffer grad;
    std::vector<std::size_t> aux;  // argmax cells, labels, row index
    std::size_t stride = 0;
    std::size_t padding = 0;
    std::size_t window = 0;
    double scalar = 0.0;

    const Tensor& result() const { return ref ? *ref : value; }
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf aliasing `t`; gradients accumulate into t's grad buffer when
  /// t.requires_grad(). `t` must outlive the graph.
  Var param(Tensor& t);
  /// Leaf aliasing `t` that never receives gradients.
  Var constant(const Tensor& t);
  /// Owned constant leaf.
  Var input(Tensor t);
  /// Owned leaf that receives gradients; read them back with grad_of().
  Var variable(Tensor t);

  /// Appends an operation node. Used by the op implementations.
  Var record(OpKind op, std::vector<int> inputs, Tensor value);

  /// Populates gradients on every grad-tracking leaf reachable from `loss`.
  /// Leaf gradients accumulate across calls until cleared on the tensors.
  void backward(Var loss);

  /// Gradient held by a variable() leaf or a param() leaf.
  std::span<const double> grad_of(Var v) const;

  /// Hash of every discrete branch taken in the forward pass (ReLU signs,
  /// max-pool winners). Two evaluations with equal signatures lie on the
  /// same smooth piece of the function.
  std::uint64_t branch_signature() const;

  std::size_t size() const { return nodes_.size(); }
  Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  /// Gradient buffer of a node, zero-initialized on first access.
  std::span<double> grad_buffer(int id);

 private:
  std::deque<Node> nodes_;
};

namespace detail {
// Propagates node `id`'s gradient to its inputs. Defined with the ops.
void backward_node(Graph& graph, int id);
}  // namespace detail

}  // namespace tl::nd
