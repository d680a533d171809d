#include "slstm/graph.hpp"

#include <algorithm>
#include <cmath>

#include "slstm/kernels.hpp"

namespace slstm::ad {

bool corrupt_sigmoid_grad_for_tests = false;

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatVec: return "matvec";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Concat: return "concat";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Neg: return "neg";
    case Op::Pick: return "pick";
    case Op::Sum: return "sum";
    case Op::Scale: return "scale";
  }
  return "?";
}

Graph::NodeId Graph::push(Op op, NodeId in0, NodeId in1, Tensor value,
                          double aux) {
  if (op != Op::Leaf && !value.all_finite())
    throw std::runtime_error(std::string(op_name(op)) +
                             ": non-finite output rejected");
  Node n;
  n.op = op;
  n.in0 = in0;
  n.in1 = in1;
  n.aux = aux;
  n.grad = Tensor::zeros(value.shape);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Graph::NodeId Graph::leaf(Tensor value) {
  if (!value.all_finite())
    throw std::runtime_error("leaf: non-finite tensor rejected");
  return push(Op::Leaf, -1, -1, std::move(value));
}

Graph::NodeId Graph::matvec(NodeId w, NodeId x) {
  const Tensor& wt = nodes_[w].value;
  const Tensor& xt = nodes_[x].value;
  if (wt.rank() != 2 || xt.rank() != 1 || wt.shape[1] != xt.shape[0])
    throw std::invalid_argument("matvec: shape mismatch " + wt.shape_str() +
                                " vs " + xt.shape_str());
  Tensor out({wt.shape[0]});
  kernels::matvec(out.v.data(), wt.v.data(), xt.v.data(), wt.shape[0],
                  wt.shape[1]);
  return push(Op::MatVec, w, x, std::move(out));
}

#define SLSTM_BINOP(method, OP, KERN)                                     \
  Graph::NodeId Graph::method(NodeId a, NodeId b) {                       \
    const Tensor& at = nodes_[a].value;                                   \
    const Tensor& bt = nodes_[b].value;                                   \
    require_same_shape(at, bt, #method);                                  \
    Tensor out(at.shape);                                                 \
    kernels::KERN(out.v.data(), at.v.data(), bt.v.data(), at.numel());    \
    return push(Op::OP, a, b, std::move(out));                            \
  }

SLSTM_BINOP(add, Add, add)
SLSTM_BINOP(sub, Sub, sub)
SLSTM_BINOP(mul, Mul, mul)
SLSTM_BINOP(div, Div, div)
#undef SLSTM_BINOP

Graph::NodeId Graph::concat(NodeId a, NodeId b) {
  const Tensor& at = nodes_[a].value;
  const Tensor& bt = nodes_[b].value;
  if (at.rank() != 1 || bt.rank() != 1)
    throw std::invalid_argument("concat: expects vectors, got " +
                                at.shape_str() + " and " + bt.shape_str());
  Tensor out({at.numel() + bt.numel()});
  std::copy(at.v.begin(), at.v.end(), out.v.begin());
  std::copy(bt.v.begin(), bt.v.end(), out.v.begin() + at.numel());
  return push(Op::Concat, a, b, std::move(out));
}

Graph::NodeId Graph::unary(Op op, NodeId a) {
  const Tensor& at = nodes_[a].value;
  Tensor out(at.shape);
  switch (op) {
    case Op::Sigmoid:
      kernels::sigmoid(out.v.data(), at.v.data(), at.numel());
      break;
    case Op::Tanh:
      kernels::tanh(out.v.data(), at.v.data(), at.numel());
      break;
    case Op::Relu:
      kernels::relu(out.v.data(), at.v.data(), at.numel());
      break;
    case Op::Exp:
      kernels::exp(out.v.data(), at.v.data(), at.numel());
      break;
    case Op::Log:
      kernels::log(out.v.data(), at.v.data(), at.numel());
      break;
    case Op::Neg:
      kernels::scale(out.v.data(), at.v.data(), -1.0, at.numel());
      break;
    default:
      throw std::logic_error("unary: bad op");
  }
  return push(op, a, -1, std::move(out));
}

Graph::NodeId Graph::sigmoid(NodeId a) { return unary(Op::Sigmoid, a); }
Graph::NodeId Graph::tanh(NodeId a) { return unary(Op::Tanh, a); }
Graph::NodeId Graph::relu(NodeId a) { return unary(Op::Relu, a); }
Graph::NodeId Graph::exp(NodeId a) { return unary(Op::Exp, a); }
Graph::NodeId Graph::log(NodeId a) { return unary(Op::Log, a); }
Graph::NodeId Graph::neg(NodeId a) { return unary(Op::Neg, a); }

Graph::NodeId Graph::pick(NodeId a, std::size_t index) {
  const Tensor& at = nodes_[a].value;
  if (index >= at.numel())
    throw std::invalid_argument("pick: index out of range for " +
                                at.shape_str());
  return push(Op::Pick, a, -1, Tensor::scalar(at.v[index]),
              static_cast<double>(index));
}

Graph::NodeId Graph::sum(NodeId a) {
  const Tensor& at = nodes_[a].value;
  double acc = 0.0;
  for (double x : at.v) acc += x;
  return push(Op::Sum, a, -1, Tensor::scalar(acc));
}

Graph::NodeId Graph::scale(NodeId a, double k) {
  const Tensor& at = nodes_[a].value;
  Tensor out(at.shape);
  kernels::scale(out.v.data(), at.v.data(), k, at.numel());
  return push(Op::Scale, a, -1, std::move(out), k);
}

void Graph::backward(NodeId loss) {
  if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size()))
    throw std::invalid_argument("backward: bad loss node");
  if (nodes_[loss].value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                nodes_[loss].value.shape_str());
  for (Node& n : nodes_) std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
  nodes_[loss].grad.v[0] = 1.0;

  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    const std::size_t cnt = n.value.numel();
    bool any = false;
    for (double g : n.grad.v)
      if (g != 0.0) { any = true; break; }
    if (!any || n.op == Op::Leaf) continue;

    Tensor& v = n.value;
    const double* g = n.grad.v.data();
    switch (n.op) {
      case Op::MatVec: {
        Node& wn = nodes_[n.in0];
        Node& xn = nodes_[n.in1];
        const std::size_t m = wn.value.shape[0];
        const std::size_t k = wn.value.shape[1];
        kernels::matvec_grad_w(wn.grad.v.data(), g, xn.value.v.data(), m, k);
        kernels::matvec_grad_x(xn.grad.v.data(), wn.value.v.data(), g, m, k);
        break;
      }
      case Op::Add: {
        double* ga = nodes_[n.in0].grad.v.data();
        double* gb = nodes_[n.in1].grad.v.data();
        for (std::size_t i = 0; i < cnt; ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::Sub: {
        double* ga = nodes_[n.in0].grad.v.data();
        double* gb = nodes_[n.in1].grad.v.data();
        for (std::size_t i = 0; i < cnt; ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::Mul: {
        Node& a = nodes_[n.in0];
        Node& b = nodes_[n.in1];
        for (std::size_t i = 0; i < cnt; ++i) {
          a.grad.v[i] += g[i] * b.value.v[i];
          b.grad.v[i] += g[i] * a.value.v[i];
        }
        break;
      }
      case Op::Div: {
        Node& a = nodes_[n.in0];
        Node& b = nodes_[n.in1];
        for (std::size_t i = 0; i < cnt; ++i) {
          const double bi = b.value.v[i];
          a.grad.v[i] += g[i] / bi;
          b.grad.v[i] -= g[i] * a.value.v[i] / (bi * bi);
        }
        break;
      }
      case Op::Concat: {
        Node& a = nodes_[n.in0];
        Node& b = nodes_[n.in1];
        const std::size_t na = a.value.numel();
        for (std::size_t i = 0; i < na; ++i) a.grad.v[i] += g[i];
        for (std::size_t i = 0; i < b.value.numel(); ++i)
          b.grad.v[i] += g[na + i];
        break;
      }
      case Op::Sigmoid: {
        Node& a = nodes_[n.in0];
        const double skew = corrupt_sigmoid_grad_for_tests ? 1.01 : 1.0;
        for (std::size_t i = 0; i < cnt; ++i) {
          const double y = v.v[i];
          a.grad.v[i] += g[i] * y * (1.0 - y) * skew;
        }
        break;
      }
      case Op::Tanh: {
        Node& a = nodes_[n.in0];
        for (std::size_t i = 0; i < cnt; ++i) {
          const double y = v.v[i];
          a.grad.v[i] += g[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::Relu: {
        Node& a = nodes_[n.in0];
        for (std::size_t i = 0; i < cnt; ++i)
          if (a.value.v[i] > 0.0) a.grad.v[i] += g[i];
        break;
      }
      case Op::Exp: {
        Node& a = nodes_[n.in0];
        for (std::size_t i = 0; i < cnt; ++i) a.grad.v[i] += g[i] * v.v[i];
        break;
      }
      case Op::Log: {
        Node& a = nodes_[n.in0];
        for (std::size_t i = 0; i < cnt; ++i)
          a.grad.v[i] += g[i] / a.value.v[i];
        break;
      }
      case Op::Neg: {
        Node& a = nodes_[n.in0];
        for (std::size_t i = 0; i < cnt; ++i) a.grad.v[i] -= g[i];
        break;
      }
      case Op::Pick: {
        Node& a = nodes_[n.in0];
        a.grad.v[static_cast<std::size_t>(n.aux)] += g[0];
        break;
      }
      case Op::Sum: {
        Node& a = nodes_[n.in0];
        for (double& ga : a.grad.v) ga += g[0];
        break;
      }
      case Op::Scale: {
        Node& a = nodes_[n.in0];
        for (std::size_t i = 0; i < cnt; ++i) a.grad.v[i] += g[i] * n.aux;
        break;
      }
      case Op::Leaf:
        break;
    }
  }
}

}  // namespace slstm::ad
