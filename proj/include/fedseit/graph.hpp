#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fedseit/tensor.hpp"

namespace fedseit {

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so
/// walking indices backwards is a valid reverse topological order.
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor& out_grad)>;

  /// Leaf whose gradient is tracked.
  Var leaf(Tensor value);
  /// Leaf that never receives gradient.
  Var constant(Tensor value);

  /// Appends an operation result. `fn` may be empty for non-differentiable ops.
  Var record(Tensor value, std::span<const Var> parents, Backward fn);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Gradient of the last backward root with respect to `v`; zeros if `v`
  /// was not on any path to the root.
  Tensor grad(Var v) const;

  /// Gradient buffer of `v`, allocated on first use; nullptr when `v` does
  /// not require gradient.
  Tensor* grad_target(Var v);

  void accumulate(Var v, const Tensor& delta);

  /// Seeds d(root)/d(root) = 1 and propagates to every tracked node.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Drops every node recorded after the first `count`.
  void truncate(std::size_t count);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

namespace ops {

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double factor);
/// a * s where s is a single-element node.
Var scale_by(Graph& g, Var a, Var s);
/// Single element of a vector node, as a one-element node.
Var element(Graph& g, Var v, std::size_t index);
/// Elementwise product with a fixed tensor (dropout masks).
Var mul_const(Graph& g, Var a, const Tensor& factor);

Var relu(Graph& g, Var a);
Var sigmoid(Graph& g, Var a);

/// filters[f, d, j] * mask[j] for filters of shape [F, D, N] and mask [N].
Var mask_filters(Graph& g, Var filters, Var mask);

/// Valid 1-D convolution over the token axis followed by max-over-time
/// pooling: input [L, D], filters [F, D, N] -> [N]. Requires L >= F.
/// Gradient flows only through the first maximising window of each filter.
Var conv1d_maxpool(Graph& g, Var input, Var filters);

/// input [n] times weights [n, m] -> [m].
Var affine(Graph& g, Var input, Var weights);

/// Concatenates 1-D nodes.
Var concat(Graph& g, std::span<const Var> parts);

/// -log softmax(logits)[label]; logits must be 1-D.
Var softmax_cross_entropy(Graph& g, Var logits, std::size_t label);

Var sum(Graph& g, Var a);
/// Sum of absolute values; subgradient 0 at 0.
Var l1(Graph& g, Var a);
Var squared_l2(Graph& g, Var a);

}  // namespace ops

/// Plain (non-graph) reference of the forward computations, shared by the
/// model when no gradient is needed.
namespace kernels {

Tensor conv1d_maxpool(const Tensor& input, const Tensor& filters, std::vector<std::size_t>* argmax = nullptr);
Tensor softmax(std::span<const double> logits);
/// -log softmax(logits)[label], stable for large logit gaps.
double cross_entropy(std::span<const double> logits, std::size_t label);
double sigmoid(double x);

}  // namespace kernels

}  // namespace fedseit
