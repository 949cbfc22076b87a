#include "tripletlens/graph.hpp"

#include <algorithm>

#include "tripletlens/error.hpp"

namespace tl::nd {

const Tensor& Var::value() const {
  if (!graph_) throw ContractViolation("use of an unbound Var");
  return graph_->node(id_).result();
}

Var Graph::param(Tensor& t) {
  Node n;
  n.ref = &t;
  if (t.requires_grad()) {
    n.sink = &t;
    n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::constant(const Tensor& t) {
  Node n;
  n.ref = &t;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::input(Tensor t) {
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::variable(Tensor t) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.value = std::move(t);
  n.value.set_requires_grad(true);
  n.sink = &n.value;
  n.needs_grad = true;
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::record(OpKind op, std::vector<int> inputs, Tensor value) {
  Node n;
  n.op = op;
  for (int in : inputs) {
    if (in < 0 || static_cast<std::size_t>(in) >= nodes_.size()) {
      throw ContractViolation("graph input must precede its consumer");
    }
    n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(in)].needs_grad;
  }
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

std::span<double> Graph::grad_buffer(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.result().numel(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) {
    throw ContractViolation("backward: loss belongs to another graph");
  }
  if (loss.value().numel() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " +
                            shape_to_string(loss.shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  grad_buffer(loss.id())[0] = 1.0;

  for (int id = loss.id(); id >= 0; --id) {
    Node& n = node(id);
    if (n.grad.empty() || !n.needs_grad) continue;
    if (n.op == OpKind::Leaf) {
      if (n.sink) {
        auto dst = n.sink->ensure_grad();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
      }
      continue;
    }
    detail::backward_node(*this, id);
  }
}

std::span<const double> Graph::grad_of(Var v) const {
  const Node& n = node(v.id());
  if (!n.sink) throw ContractViolation("grad_of: node does not track gradients");
  return n.sink->grad();
}

std::uint64_t Graph::branch_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  for (const Node& n : nodes_) {
    if (n.op == OpKind::Relu) {
      for (double x : node(n.inputs[0]).result().data()) mix(x > 0.0 ? 1 : 2);
    } else if (n.op == OpKind::MaxPool2d) {
      for (std::size_t a : n.aux) mix(a);
    }
  }
  return h;
}

}  // namespace tl::nd
