#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slstm/tensor.hpp"

namespace slstm::ad {

enum class Op : std::uint8_t {
  Leaf,
  MatVec,
  Add,
  Sub,
  Mul,
  Div,
  Concat,
  Sigmoid,
  Tanh,
  Relu,
  Exp,
  Log,
  Neg,
  Pick,
  Sum,
  Scale,
};

const char* op_name(Op op);

// Fault-injection hook for gradient-check tests: skews the sigmoid
// derivative so a broken backward rule is observable.
extern bool corrupt_sigmoid_grad_for_tests;

// Define-by-run tape. Nodes are appended in topological order, so the
// backward pass is a single reverse sweep. One Graph is single-threaded;
// independent graphs may run concurrently.
class Graph {
 public:
  using NodeId = int;

  NodeId leaf(Tensor value);

  NodeId matvec(NodeId w, NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId concat(NodeId a, NodeId b);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId neg(NodeId a);
  // scalar extraction from a vector
  NodeId pick(NodeId a, std::size_t index);
  // reduce to scalar
  NodeId sum(NodeId a);
  NodeId scale(NodeId a, double k);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }

  // Reverse sweep from a scalar loss node. Every node gets its gradient
  // accumulator; nodes not on a path to the loss keep zero gradient.
  void backward(NodeId loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Op op;
    NodeId in0 = -1;
    NodeId in1 = -1;
    double aux = 0.0;  // scale factor or pick index
    Tensor value;
    Tensor grad;
  };

  NodeId push(Op op, NodeId in0, NodeId in1, Tensor value, double aux = 0.0);
  NodeId unary(Op op, NodeId a);

  std::vector<Node> nodes_;
};

}  // namespace slstm::ad
