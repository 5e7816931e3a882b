#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "multiattn/tensor.hpp"

namespace multiattn {

using ParamId = std::size_t;
using NodeId = std::uint32_t;

/// Named trainable tensors. Ids are dense and follow registration order.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor value);
  ParamId id(std::string_view name) const;
  bool contains(std::string_view name) const;

  const Tensor& value(ParamId id) const { return values_.at(id); }
  Tensor& value(ParamId id) { return values_.at(id); }
  const Tensor& value(std::string_view name) const { return values_.at(id(name)); }
  Tensor& value(std::string_view name) { return values_.at(id(name)); }
  const std::string& name(ParamId id) const { return names_.at(id); }

  std::size_t size() const noexcept { return values_.size(); }
  /// Total number of scalar entries across all parameters.
  std::size_t scalar_count() const noexcept;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, ParamId, std::less<>> index_;
};

/// One gradient tensor per parameter of a store, zero-initialized.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterStore& store);

  Tensor& operator[](ParamId id) { return tensors_.at(id); }
  const Tensor& operator[](ParamId id) const { return tensors_.at(id); }
  std::size_t size() const noexcept { return tensors_.size(); }
  void zero();
  void scale(double factor);
  double norm() const;
  std::map<std::string, Tensor> named(const ParameterStore& store) const;

 private:
  std::vector<Tensor> tensors_;
};

enum class OpKind : std::uint8_t {
  Constant,
  Parameter,
  MatMul,
  MatMulTN,
  MatMulNT,
  Affine,
  AffineRows,
  Add,
  AddRow,
  Sub,
  Mul,
  Scale,
  ScaleBy,
  Tanh,
  Sigmoid,
  ConcatRows,
  StackRows,
  Row,
  Slice,
  Element,
  Embedding,
  EmbeddingRows,
  Sum,
  AddN,
  Softmax,
  CrossEntropy,
  SoftmaxCrossEntropy,
};

std::string_view op_name(OpKind op);
/// Inverse of op_name; nullopt for unknown names.
std::optional<OpKind> op_from_name(std::string_view name);
/// All differentiable op kinds (everything except the two leaf kinds).
std::span<const OpKind> differentiable_ops();

/// Test hook: multiply the adjoint an op sends to its inputs by `factor`.
/// Used to verify that the gradient checker catches broken adjoint rules.
struct AdjointFault {
  OpKind op;
  double factor = 1.5;
};

/// Numerically stable softmax of a non-empty finite rank-1 tensor.
Tensor softmax(const Tensor& v);

/// Reverse-mode computation graph. Nodes are appended in topological order;
/// each op caches its forward value and has a registered adjoint rule.
/// A graph is single-threaded; distinct graphs are independent.
class Graph {
 public:
  explicit Graph(const ParameterStore* params = nullptr, std::optional<AdjointFault> fault = std::nullopt);

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  NodeId constant(Tensor value);
  /// Leaf for a trainable parameter. Repeated calls return the same node.
  NodeId parameter(ParamId id);
  NodeId parameter(std::string_view name);

  // Linear algebra. Rank-1 right operands are column vectors.
  NodeId matmul(NodeId a, NodeId b);        // a * b
  NodeId matmul_tn(NodeId a, NodeId b);     // a^T * b
  NodeId matmul_nt(NodeId a, NodeId b);     // a * b^T (both rank 2)
  NodeId affine(NodeId w, NodeId x, NodeId b);       // w x + b
  NodeId affine_rows(NodeId x, NodeId w, NodeId b);  // rows of x mapped by w, plus b

  // Elementwise.
  NodeId add(NodeId a, NodeId b);
  NodeId add_row(NodeId m, NodeId v);  // v added to every row of m
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double k);
  NodeId scale_by(NodeId a, NodeId s);  // s is a one-element node
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);

  // Structure.
  /// Rank-0/1 inputs concatenate into one vector; rank-2 inputs with equal
  /// column counts stack vertically.
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId stack_rows(std::span<const NodeId> vectors);
  NodeId row(NodeId m, std::size_t index);
  NodeId slice(NodeId v, std::size_t begin, std::size_t length);
  NodeId element(NodeId v, std::size_t index);
  NodeId embedding_lookup(NodeId table, std::size_t id);
  NodeId embedding_rows(NodeId table, std::span<const std::size_t> ids);

  // Reductions and losses.
  NodeId sum(NodeId a);
  NodeId add_n(std::span<const NodeId> terms);
  NodeId softmax(NodeId v);
  /// -log(p[label]) for a probability vector p.
  NodeId cross_entropy(NodeId probs, std::size_t label);
  /// -log softmax(logits)[label], fused for stability.
  NodeId softmax_cross_entropy(NodeId logits, std::size_t label);

  const Tensor& value(NodeId id) const;
  const Shape& shape(NodeId id) const { return value(id).shape(); }
  OpKind kind(NodeId id) const { return node(id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Accumulates seed * d(loss)/d(param) into `grads` for every parameter
  /// leaf in the graph. Parameters that do not reach the loss get nothing
  /// added, so a freshly zeroed Gradients reports exact zeros for them.
  void backward(NodeId loss, Gradients& grads, double seed = 1.0);
  /// Convenience form returning fresh gradients for the whole store.
  Gradients backward(NodeId loss);

 private:
  struct Node {
    OpKind op = OpKind::Constant;
    std::vector<NodeId> inputs;
    Tensor value;
    std::vector<std::size_t> indices;  // labels, ids, offsets
    double factor = 0.0;
    ParamId param = 0;
    bool needs_grad = false;
  };

  const Node& node(NodeId id) const;
  NodeId push(Node node);
  NodeId push_op(OpKind op, std::vector<NodeId> inputs, Tensor value);
  void backprop_node(NodeId id, std::vector<std::vector<double>>& grads) const;

  const ParameterStore* params_;
  std::optional<AdjointFault> fault_;
  std::vector<Node> nodes_;
  std::unordered_map<ParamId, NodeId> param_nodes_;
};

}  // namespace multiattn
