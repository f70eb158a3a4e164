#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "weakmcn/numcore/tensor.hpp"

namespace weakmcn::nc {

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kMatMul,
  kConv2d,
  kRelu,
  kSigmoid,
  kExp,
  kLog,
  kSoftmax,
  kSum,
  kMean,
  kMax,
  kBroadcast,
  kConcat,
  kResize,
  kClamp,
  kReshape,
  kTranspose,
  kIndexSelect,
};

std::string_view op_name(OpKind kind);

// Handle to a node inside a Graph. Only meaningful for the graph that created it.
struct Var {
  std::size_t id = 0;
};

class Graph;

// Gradients produced by Graph::backward, keyed by node id.
class Gradients {
 public:
  // Gradient of the root w.r.t. v; a zero tensor of v's shape when v did not
  // influence the root.
  const Tensor& operator[](Var v) const;
  bool has(Var v) const;

 private:
  friend class Graph;
  std::vector<std::optional<Tensor>> grads_;
  std::vector<Shape> shapes_;
  mutable std::vector<std::optional<Tensor>> zeros_;
};

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
};

// Append-only tape of tensor operations with reverse-mode differentiation.
// Inputs of every node precede it, so node order is a topological order.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Leaf whose gradient is tracked iff t.requires_grad().
  Var leaf(Tensor t);
  // Leaf that always requires grad.
  Var param(Tensor t);
  // Leaf that never requires grad.
  Var constant(Tensor t);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Shape& shape(Var v) const { return nodes_[v.id].value.shape(); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  OpKind kind(Var v) const { return nodes_[v.id].kind; }
  const std::vector<std::size_t>& inputs(Var v) const { return nodes_[v.id].inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Elementwise with numpy-style broadcasting.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // Rejects any zero in the denominator.
  Var div(Var a, Var b);

  Var scale(Var a, Real s);
  Var add_scalar(Var a, Real s);

  // (n x k) . (k x m) -> (n x m)
  Var matmul(Var a, Var b);

  // x: (C, H, W); weight: (O, C, k, k) with odd k; bias: (O) or none.
  // Zero padding dilation*(k-1)/2 keeps the extent at stride 1; output extent
  // is ceil(H / stride).
  Var conv2d(Var x, Var weight, std::optional<Var> bias, Conv2dOptions opts = {});

  Var relu(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  // Rejects non-positive inputs; clamp first.
  Var log(Var a);
  Var clamp(Var a, Real lo, Real hi);

  Var softmax(Var a, std::size_t axis);
  Var sum(Var a, std::vector<std::size_t> axes);
  Var sum_all(Var a);
  Var mean(Var a, std::vector<std::size_t> axes);
  Var mean_all(Var a);
  // Reduces one axis. Ties resolve to the first index along the axis, which
  // receives the whole incoming gradient.
  Var max(Var a, std::size_t axis);

  Var broadcast_to(Var a, Shape shape);
  Var concat(const std::vector<Var>& parts, std::size_t axis);

  // x: (C, H, W) -> (C, out_h, out_w). Half-pixel bilinear sampling when
  // enlarging an axis; triangle-filter (antialiased bilinear) when shrinking;
  // identity for equal extents.
  Var resize(Var x, std::size_t out_h, std::size_t out_w);

  Var reshape(Var a, Shape shape);
  Var transpose(Var a);
  // Rows of a along axis 0.
  Var index_select(Var a, const std::vector<std::size_t>& rows);

  // Root must be a single-element tensor.
  Gradients backward(Var root) const;

 private:
  // grad_in[i] is null when input i does not need a gradient.
  using BackwardFn = std::function<void(const Graph& g, std::size_t self, const Tensor& grad_out,
                                        std::vector<Tensor*>& grad_in)>;

  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn);
  bool any_requires_grad(const std::vector<std::size_t>& inputs) const;
  Var binary(OpKind kind, Var a, Var b);

  // A deque, so references handed out by value() and shape() survive later appends.
  std::deque<Node> nodes_;
};

// Separable resampling matrix (out x in) used by Graph::resize.
std::vector<Real> resize_weights(std::size_t in, std::size_t out);

}  // namespace weakmcn::nc
