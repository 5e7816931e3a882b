#include "multiattn/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "multiattn/errors.hpp"

namespace multiattn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_mat(const Tensor& t) { return ConstMatMap(t.raw(), t.shape()[0], t.shape()[1]); }
ConstVecMap as_vec(const Tensor& t) { return ConstVecMap(t.raw(), static_cast<Eigen::Index>(t.size())); }
MatMap as_mat(std::vector<double>& g, std::size_t r, std::size_t c) { return MatMap(g.data(), r, c); }
VecMap as_vec(std::vector<double>& g) { return VecMap(g.data(), static_cast<Eigen::Index>(g.size())); }

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
                   shape_to_string(b));
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a, std::string_view why) {
  throw ShapeError(std::string(op) + ": shape " + shape_to_string(a) + " " + std::string(why));
}

constexpr std::array kDifferentiable = {
    OpKind::MatMul,      OpKind::MatMulTN,  OpKind::MatMulNT,      OpKind::Affine,    OpKind::AffineRows,
    OpKind::Add,         OpKind::AddRow,    OpKind::Sub,           OpKind::Mul,       OpKind::Scale,
    OpKind::ScaleBy,     OpKind::Tanh,      OpKind::Sigmoid,       OpKind::ConcatRows, OpKind::StackRows,
    OpKind::Row,         OpKind::Slice,     OpKind::Element,       OpKind::Embedding, OpKind::EmbeddingRows,
    OpKind::Sum,         OpKind::AddN,      OpKind::Softmax,       OpKind::CrossEntropy,
    OpKind::SoftmaxCrossEntropy,
};

}  // namespace

// ---------------------------------------------------------------------------
// ParameterStore / Gradients

ParamId ParameterStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  value.check_finite("parameter " + name);
  const ParamId id = values_.size();
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return id;
}

ParamId ParameterStore::id(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

bool ParameterStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParameterStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Gradients::Gradients(const ParameterStore& store) {
  tensors_.reserve(store.size());
  for (ParamId i = 0; i < store.size(); ++i) tensors_.push_back(Tensor::zeros_like(store.value(i)));
}

void Gradients::zero() {
  for (auto& t : tensors_) t.fill(0.0);
}

void Gradients::scale(double factor) {
  for (auto& t : tensors_) {
    for (auto& x : t.data()) x *= factor;
  }
}

double Gradients::norm() const {
  double s = 0.0;
  for (const auto& t : tensors_) {
    for (double x : t.data()) s += x * x;
  }
  return std::sqrt(s);
}

std::map<std::string, Tensor> Gradients::named(const ParameterStore& store) const {
  std::map<std::string, Tensor> out;
  for (ParamId i = 0; i < tensors_.size(); ++i) out.emplace(store.name(i), tensors_[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Op names

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulTN: return "matmul_tn";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::Affine: return "affine";
    case OpKind::AffineRows: return "affine_rows";
    case OpKind::Add: return "add";
    case OpKind::AddRow: return "add_row";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "elementwise_mul";
    case OpKind::Scale: return "scale";
    case OpKind::ScaleBy: return "scale_by";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::StackRows: return "stack_rows";
    case OpKind::Row: return "row";
    case OpKind::Slice: return "slice";
    case OpKind::Element: return "element";
    case OpKind::Embedding: return "embedding_lookup";
    case OpKind::EmbeddingRows: return "embedding_rows";
    case OpKind::Sum: return "sum";
    case OpKind::AddN: return "add_n";
    case OpKind::Softmax: return "softmax";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (OpKind op : kDifferentiable) {
    if (op_name(op) == name) return op;
  }
  return std::nullopt;
}

std::span<const OpKind> differentiable_ops() { return kDifferentiable; }

Tensor softmax(const Tensor& v) {
  if (v.rank() != 1) shape_error("softmax", v.shape(), "is not rank 1");
  v.check_finite("softmax input");
  const auto x = v.data();
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (auto& o : out) o /= total;
  return Tensor::vector(std::move(out));
}

// ---------------------------------------------------------------------------
// Graph construction

Graph::Graph(const ParameterStore* params, std::optional<AdjointFault> fault)
    : params_(params), fault_(fault) {
  nodes_.reserve(256);
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id >= nodes_.size()) throw GraphError("node id " + std::to_string(id) + " out of range");
  return nodes_[id];
}

const Tensor& Graph::value(NodeId id) const {
  const Node& n = node(id);
  if (n.op == OpKind::Parameter) return params_->value(n.param);
  return n.value;
}

NodeId Graph::push(Node n) {
  if (nodes_.size() >= std::numeric_limits<NodeId>::max()) throw GraphError("graph too large");
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::push_op(OpKind op, std::vector<NodeId> inputs, Tensor value) {
  value.check_finite(op_name(op));
  Node n;
  n.op = op;
  n.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](NodeId i) { return nodes_[i].needs_grad; });
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::constant(Tensor value) {
  value.check_finite("constant");
  Node n;
  n.op = OpKind::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::parameter(ParamId id) {
  if (params_ == nullptr) throw GraphError("graph has no parameter store");
  if (id >= params_->size()) throw GraphError("parameter id " + std::to_string(id) + " out of range");
  if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return it->second;
  Node n;
  n.op = OpKind::Parameter;
  n.param = id;
  n.needs_grad = true;
  const NodeId nid = push(std::move(n));
  param_nodes_.emplace(id, nid);
  return nid;
}

NodeId Graph::parameter(std::string_view name) {
  if (params_ == nullptr) throw GraphError("graph has no parameter store");
  return parameter(params_->id(name));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2) shape_error("matmul", A.shape(), B.shape());
  if (B.rank() == 1) {
    if (A.shape()[1] != B.size()) shape_error("matmul", A.shape(), B.shape());
    Tensor out(Shape{A.shape()[0]});
    VecMap(out.raw(), out.size()) = as_mat(A) * as_vec(B);
    return push_op(OpKind::MatMul, {a, b}, std::move(out));
  }
  if (B.rank() != 2 || A.shape()[1] != B.shape()[0]) shape_error("matmul", A.shape(), B.shape());
  Tensor out(Shape{A.shape()[0], B.shape()[1]});
  MatMap(out.raw(), A.shape()[0], B.shape()[1]).noalias() = as_mat(A) * as_mat(B);
  return push_op(OpKind::MatMul, {a, b}, std::move(out));
}

NodeId Graph::matmul_tn(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2) shape_error("matmul_tn", A.shape(), B.shape());
  if (B.rank() == 1) {
    if (A.shape()[0] != B.size()) shape_error("matmul_tn", A.shape(), B.shape());
    Tensor out(Shape{A.shape()[1]});
    VecMap(out.raw(), out.size()) = as_mat(A).transpose() * as_vec(B);
    return push_op(OpKind::MatMulTN, {a, b}, std::move(out));
  }
  if (B.rank() != 2 || A.shape()[0] != B.shape()[0]) shape_error("matmul_tn", A.shape(), B.shape());
  Tensor out(Shape{A.shape()[1], B.shape()[1]});
  MatMap(out.raw(), A.shape()[1], B.shape()[1]).noalias() = as_mat(A).transpose() * as_mat(B);
  return push_op(OpKind::MatMulTN, {a, b}, std::move(out));
}

NodeId Graph::matmul_nt(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.shape()[1] != B.shape()[1]) shape_error("matmul_nt", A.shape(), B.shape());
  Tensor out(Shape{A.shape()[0], B.shape()[0]});
  MatMap(out.raw(), A.shape()[0], B.shape()[0]).noalias() = as_mat(A) * as_mat(B).transpose();
  return push_op(OpKind::MatMulNT, {a, b}, std::move(out));
}

NodeId Graph::affine(NodeId w, NodeId x, NodeId b) {
  const Tensor& W = value(w);
  const Tensor& X = value(x);
  const Tensor& B = value(b);
  if (W.rank() != 2 || X.rank() != 1 || W.shape()[1] != X.size()) shape_error("affine", W.shape(), X.shape());
  if (B.rank() != 1 || B.size() != W.shape()[0]) shape_error("affine", W.shape(), B.shape());
  Tensor out(Shape{W.shape()[0]});
  VecMap(out.raw(), out.size()) = as_mat(W) * as_vec(X) + as_vec(B);
  return push_op(OpKind::Affine, {w, x, b}, std::move(out));
}

NodeId Graph::affine_rows(NodeId x, NodeId w, NodeId b) {
  const Tensor& X = value(x);
  const Tensor& W = value(w);
  const Tensor& B = value(b);
  if (X.rank() != 2 || W.rank() != 2 || X.shape()[1] != W.shape()[1]) shape_error("affine_rows", X.shape(), W.shape());
  if (B.rank() != 1 || B.size() != W.shape()[0]) shape_error("affine_rows", W.shape(), B.shape());
  const auto t = X.shape()[0];
  const auto m = W.shape()[0];
  Tensor out(Shape{t, m});
  auto Y = MatMap(out.raw(), t, m);
  Y.noalias() = as_mat(X) * as_mat(W).transpose();
  Y.rowwise() += as_vec(B).transpose();
  return push_op(OpKind::AffineRows, {x, w, b}, std::move(out));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape() != B.shape()) shape_error("add", A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return push_op(OpKind::Add, {a, b}, std::move(out));
}

NodeId Graph::add_row(NodeId m, NodeId v) {
  const Tensor& M = value(m);
  const Tensor& V = value(v);
  if (M.rank() != 2 || V.rank() != 1 || M.shape()[1] != V.size()) shape_error("add_row", M.shape(), V.shape());
  Tensor out(M.shape());
  const auto cols = V.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = M[i] + V[i % cols];
  return push_op(OpKind::AddRow, {m, v}, std::move(out));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape() != B.shape()) shape_error("sub", A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return push_op(OpKind::Sub, {a, b}, std::move(out));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape() != B.shape()) shape_error("elementwise_mul", A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return push_op(OpKind::Mul, {a, b}, std::move(out));
}

NodeId Graph::scale(NodeId a, double k) {
  if (!std::isfinite(k)) throw NumericError("scale: non-finite factor");
  const Tensor& A = value(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * A[i];
  const NodeId id = push_op(OpKind::Scale, {a}, std::move(out));
  nodes_[id].factor = k;
  return id;
}

NodeId Graph::scale_by(NodeId a, NodeId s) {
  const Tensor& A = value(a);
  const Tensor& S = value(s);
  if (S.size() != 1) shape_error("scale_by", A.shape(), S.shape());
  const double k = S[0];
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * A[i];
  return push_op(OpKind::ScaleBy, {a, s}, std::move(out));
}

NodeId Graph::tanh(NodeId a) {
  const Tensor& A = value(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(A[i]);
  return push_op(OpKind::Tanh, {a}, std::move(out));
}

NodeId Graph::sigmoid(NodeId a) {
  const Tensor& A = value(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = A[i];
    // Branch keeps exp() from overflowing for large |x|.
    out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return push_op(OpKind::Sigmoid, {a}, std::move(out));
}

NodeId Graph::concat_rows(std::span<const NodeId> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Tensor& first = value(parts[0]);
  std::vector<double> data;
  Shape shape;
  if (first.rank() <= 1) {
    for (NodeId p : parts) {
      const Tensor& t = value(p);
      if (t.rank() > 1) shape_error("concat_rows", first.shape(), t.shape());
      data.insert(data.end(), t.data().begin(), t.data().end());
    }
    shape = {data.size()};
  } else {
    const auto cols = first.shape()[1];
    std::size_t rows = 0;
    for (NodeId p : parts) {
      const Tensor& t = value(p);
      if (t.rank() != 2 || t.shape()[1] != cols) shape_error("concat_rows", first.shape(), t.shape());
      rows += t.shape()[0];
      data.insert(data.end(), t.data().begin(), t.data().end());
    }
    shape = {rows, cols};
  }
  return push_op(OpKind::ConcatRows, std::vector<NodeId>(parts.begin(), parts.end()),
                 Tensor(std::move(shape), std::move(data)));
}

NodeId Graph::stack_rows(std::span<const NodeId> vectors) {
  if (vectors.empty()) throw ShapeError("stack_rows: no inputs");
  const Tensor& first = value(vectors[0]);
  if (first.rank() != 1) shape_error("stack_rows", first.shape(), "is not rank 1");
  const auto cols = first.size();
  std::vector<double> data;
  data.reserve(cols * vectors.size());
  for (NodeId v : vectors) {
    const Tensor& t = value(v);
    if (t.rank() != 1 || t.size() != cols) shape_error("stack_rows", first.shape(), t.shape());
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return push_op(OpKind::StackRows, std::vector<NodeId>(vectors.begin(), vectors.end()),
                 Tensor(Shape{vectors.size(), cols}, std::move(data)));
}

NodeId Graph::row(NodeId m, std::size_t index) {
  const Tensor& M = value(m);
  if (M.rank() != 2 || index >= M.shape()[0]) shape_error("row", M.shape(), "has no row " + std::to_string(index));
  const auto cols = M.shape()[1];
  std::vector<double> data(M.raw() + index * cols, M.raw() + (index + 1) * cols);
  const NodeId id = push_op(OpKind::Row, {m}, Tensor(Shape{cols}, std::move(data)));
  nodes_[id].indices = {index};
  return id;
}

NodeId Graph::slice(NodeId v, std::size_t begin, std::size_t length) {
  const Tensor& V = value(v);
  if (V.rank() != 1 || length == 0 || begin + length > V.size()) {
    shape_error("slice", V.shape(), "cannot take [" + std::to_string(begin) + ", +" + std::to_string(length) + ")");
  }
  std::vector<double> data(V.raw() + begin, V.raw() + begin + length);
  const NodeId id = push_op(OpKind::Slice, {v}, Tensor(Shape{length}, std::move(data)));
  nodes_[id].indices = {begin};
  return id;
}

NodeId Graph::element(NodeId v, std::size_t index) {
  const Tensor& V = value(v);
  if (V.rank() != 1 || index >= V.size()) shape_error("element", V.shape(), "has no index " + std::to_string(index));
  const NodeId id = push_op(OpKind::Element, {v}, Tensor::scalar(V[index]));
  nodes_[id].indices = {index};
  return id;
}

NodeId Graph::embedding_lookup(NodeId table, std::size_t id) {
  const Tensor& T = value(table);
  if (T.rank() != 2 || id >= T.shape()[0]) {
    shape_error("embedding_lookup", T.shape(), "has no row for id " + std::to_string(id));
  }
  const auto cols = T.shape()[1];
  std::vector<double> data(T.raw() + id * cols, T.raw() + (id + 1) * cols);
  const NodeId nid = push_op(OpKind::Embedding, {table}, Tensor(Shape{cols}, std::move(data)));
  nodes_[nid].indices = {id};
  return nid;
}

NodeId Graph::embedding_rows(NodeId table, std::span<const std::size_t> ids) {
  const Tensor& T = value(table);
  if (T.rank() != 2) shape_error("embedding_rows", T.shape(), "is not rank 2");
  if (ids.empty()) throw ShapeError("embedding_rows: empty id list");
  const auto cols = T.shape()[1];
  std::vector<double> data;
  data.reserve(ids.size() * cols);
  for (auto id : ids) {
    if (id >= T.shape()[0]) shape_error("embedding_rows", T.shape(), "has no row for id " + std::to_string(id));
    data.insert(data.end(), T.raw() + id * cols, T.raw() + (id + 1) * cols);
  }
  const NodeId nid = push_op(OpKind::EmbeddingRows, {table}, Tensor(Shape{ids.size(), cols}, std::move(data)));
  nodes_[nid].indices.assign(ids.begin(), ids.end());
  return nid;
}

NodeId Graph::sum(NodeId a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (double x : A.data()) s += x;
  return push_op(OpKind::Sum, {a}, Tensor::scalar(s));
}

NodeId Graph::add_n(std::span<const NodeId> terms) {
  if (terms.empty()) throw ShapeError("add_n: no inputs");
  const Tensor& first = value(terms[0]);
  Tensor out = first;
  for (std::size_t k = 1; k < terms.size(); ++k) {
    const Tensor& t = value(terms[k]);
    if (t.shape() != first.shape()) shape_error("add_n", first.shape(), t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t[i];
  }
  return push_op(OpKind::AddN, std::vector<NodeId>(terms.begin(), terms.end()), std::move(out));
}

NodeId Graph::softmax(NodeId v) {
  const Tensor& V = value(v);
  if (V.rank() != 1) shape_error("softmax", V.shape(), "is not rank 1");
  return push_op(OpKind::Softmax, {v}, multiattn::softmax(V));
}

NodeId Graph::cross_entropy(NodeId probs, std::size_t label) {
  const Tensor& P = value(probs);
  if (P.rank() != 1 || label >= P.size()) shape_error("cross_entropy", P.shape(), "has no label " + std::to_string(label));
  if (!(P[label] > 0.0)) throw NumericError("cross_entropy: probability of label is not positive");
  const NodeId id = push_op(OpKind::CrossEntropy, {probs}, Tensor::scalar(-std::log(P[label])));
  nodes_[id].indices = {label};
  return id;
}

NodeId Graph::softmax_cross_entropy(NodeId logits, std::size_t label) {
  const Tensor& Z = value(logits);
  if (Z.rank() != 1 || label >= Z.size()) {
    shape_error("softmax_cross_entropy", Z.shape(), "has no label " + std::to_string(label));
  }
  const auto z = Z.data();
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double x : z) total += std::exp(x - mx);
  const double loss = std::log(total) + mx - z[label];
  const NodeId id = push_op(OpKind::SoftmaxCrossEntropy, {logits}, Tensor::scalar(loss));
  nodes_[id].indices = {label};
  return id;
}

// ---------------------------------------------------------------------------
// Reverse pass

Gradients Graph::backward(NodeId loss) {
  if (params_ == nullptr) throw GraphError("graph has no parameter store");
  Gradients grads(*params_);
  backward(loss, grads, 1.0);
  return grads;
}

void Graph::backward(NodeId loss, Gradients& grads, double seed) {
  const Tensor& L = value(loss);
  if (L.size() != 1) throw GraphError("backward: loss must be scalar, got shape " + shape_to_string(L.shape()));
  if (params_ != nullptr && grads.size() != params_->size()) {
    throw GraphError("backward: gradient buffer does not match the parameter store");
  }
  for (NodeId id = 0; id <= loss; ++id) {
    for (NodeId in : nodes_[id].inputs) {
      if (in >= id) throw GraphError("backward: graph cycle through node " + std::to_string(id));
    }
  }

  std::vector<std::vector<double>> adj(loss + 1);
  adj[loss].assign(1, seed);
  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (adj[id].empty() || !n.needs_grad) continue;
    if (n.op == OpKind::Parameter) {
      Tensor& g = grads[n.param];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += adj[id][i];
      continue;
    }
    backprop_node(id, adj);
    adj[id].clear();
    adj[id].shrink_to_fit();
  }
}

void Graph::backprop_node(NodeId id, std::vector<std::vector<double>>& adj) const {
  const Node& n = nodes_[id];
  const std::vector<double>& dy = adj[id];
  const double f = (fault_ && fault_->op == n.op) ? fault_->factor : 1.0;

  // Returns the adjoint buffer of input k, or nullptr when it needs no gradient.
  auto grad_of = [&](std::size_t k) -> std::vector<double>* {
    const NodeId in = n.inputs[k];
    if (!nodes_[in].needs_grad) return nullptr;
    auto& g = adj[in];
    if (g.empty()) g.assign(value(in).size(), 0.0);
    return &g;
  };
  const ConstVecMap dyv(dy.data(), static_cast<Eigen::Index>(dy.size()));

  switch (n.op) {
    case OpKind::Constant:
    case OpKind::Parameter:
      break;

    case OpKind::MatMul: {
      const Tensor& A = value(n.inputs[0]);
      const Tensor& B = value(n.inputs[1]);
      const auto m = A.shape()[0], k = A.shape()[1];
      if (B.rank() == 1) {
        if (auto* ga = grad_of(0)) as_mat(*ga, m, k).noalias() += f * dyv * as_vec(B).transpose();
        if (auto* gb = grad_of(1)) as_vec(*gb).noalias() += f * as_mat(A).transpose() * dyv;
      } else {
        const auto p = B.shape()[1];
        const ConstMatMap dY(dy.data(), m, p);
        if (auto* ga = grad_of(0)) as_mat(*ga, m, k).noalias() += f * dY * as_mat(B).transpose();
        if (auto* gb = grad_of(1)) as_mat(*gb, k, p).noalias() += f * as_mat(A).transpose() * dY;
      }
      break;
    }
    case OpKind::MatMulTN: {
      const Tensor& A = value(n.inputs[0]);
      const Tensor& B = value(n.inputs[1]);
      const auto k = A.shape()[0], m = A.shape()[1];
      if (B.rank() == 1) {
        if (auto* ga = grad_of(0)) as_mat(*ga, k, m).noalias() += f * as_vec(B) * dyv.transpose();
        if (auto* gb = grad_of(1)) as_vec(*gb).noalias() += f * as_mat(A) * dyv;
      } else {
        const auto p = B.shape()[1];
        const ConstMatMap dY(dy.data(), m, p);
        if (auto* ga = grad_of(0)) as_mat(*ga, k, m).noalias() += f * as_mat(B) * dY.transpose();
        if (auto* gb = grad_of(1)) as_mat(*gb, k, p).noalias() += f * as_mat(A) * dY;
      }
      break;
    }
    case OpKind::MatMulNT: {
      const Tensor& A = value(n.inputs[0]);
      const Tensor& B = value(n.inputs[1]);
      const auto m = A.shape()[0], k = A.shape()[1], p = B.shape()[0];
      const ConstMatMap dY(dy.data(), m, p);
      if (auto* ga = grad_of(0)) as_mat(*ga, m, k).noalias() += f * dY * as_mat(B);
      if (auto* gb = grad_of(1)) as_mat(*gb, p, k).noalias() += f * dY.transpose() * as_mat(A);
      break;
    }
    case OpKind::Affine: {
      const Tensor& W = value(n.inputs[0]);
      const Tensor& X = value(n.inputs[1]);
      const auto m = W.shape()[0], k = W.shape()[1];
      if (auto* gw = grad_of(0)) as_mat(*gw, m, k).noalias() += f * dyv * as_vec(X).transpose();
      if (auto* gx = grad_of(1)) as_vec(*gx).noalias() += f * as_mat(W).transpose() * dyv;
      if (auto* gb = grad_of(2)) as_vec(*gb) += f * dyv;
      break;
    }
    case OpKind::AffineRows: {
      const Tensor& X = value(n.inputs[0]);
      const Tensor& W = value(n.inputs[1]);
      const auto t = X.shape()[0], k = X.shape()[1], m = W.shape()[0];
      const ConstMatMap dY(dy.data(), t, m);
      if (auto* gx = grad_of(0)) as_mat(*gx, t, k).noalias() += f * dY * as_mat(W);
      if (auto* gw = grad_of(1)) as_mat(*gw, m, k).noalias() += f * dY.transpose() * as_mat(X);
      if (auto* gb = grad_of(2)) as_vec(*gb) += f * dY.colwise().sum().transpose();
      break;
    }
    case OpKind::Add:
    case OpKind::AddN: {
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (auto* g = grad_of(k)) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*g)[i] += f * dy[i];
        }
      }
      break;
    }
    case OpKind::AddRow: {
      const auto cols = value(n.inputs[1]).size();
      if (auto* gm = grad_of(0)) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*gm)[i] += f * dy[i];
      }
      if (auto* gv = grad_of(1)) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*gv)[i % cols] += f * dy[i];
      }
      break;
    }
    case OpKind::Sub: {
      if (auto* ga = grad_of(0)) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += f * dy[i];
      }
      if (auto* gb = grad_of(1)) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*gb)[i] -= f * dy[i];
      }
      break;
    }
    case OpKind::Mul: {
      const Tensor& A = value(n.inputs[0]);
      const Tensor& B = value(n.inputs[1]);
      if (auto* ga = grad_of(0)) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += f * dy[i] * B[i];
      }
      if (auto* gb = grad_of(1)) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*gb)[i] += f * dy[i] * A[i];
      }
      break;
    }
    case OpKind::Scale: {
      if (auto* ga = grad_of(0)) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += f * n.factor * dy[i];
      }
      break;
    }
    case OpKind::ScaleBy: {
      const Tensor& A = value(n.inputs[0]);
      const double k = value(n.inputs[1])[0];
      if (auto* ga = grad_of(0)) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += f * k * dy[i];
      }
      if (auto* gs = grad_of(1)) {
        double s = 0.0;
        for (std::size_t i = 0; i < dy.size(); ++i) s += A[i] * dy[i];
        (*gs)[0] += f * s;
      }
      break;
    }
    case OpKind::Tanh: {
      if (auto* ga = grad_of(0)) {
        for (std::size_t i = 0; i < dy.size(); ++i) {
          const double y = n.value[i];
          (*ga)[i] += f * dy[i] * (1.0 - y * y);
        }
      }
      break;
    }
    case OpKind::Sigmoid: {
      if (auto* ga = grad_of(0)) {
        for (std::size_t i = 0; i < dy.size(); ++i) {
          const double y = n.value[i];
          (*ga)[i] += f * dy[i] * y * (1.0 - y);
        }
      }
      break;
    }
    case OpKind::ConcatRows:
    case OpKind::StackRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const auto len = value(n.inputs[k]).size();
        if (auto* g = grad_of(k)) {
          for (std::size_t i = 0; i < len; ++i) (*g)[i] += f * dy[offset + i];
        }
        offset += len;
      }
      break;
    }
    case OpKind::Row: {
      if (auto* g = grad_of(0)) {
        const auto base = n.indices[0] * dy.size();
        for (std::size_t i = 0; i < dy.size(); ++i) (*g)[base + i] += f * dy[i];
      }
      break;
    }
    case OpKind::Slice:
    case OpKind::Element: {
      if (auto* g = grad_of(0)) {
        const auto base = n.indices[0];
        for (std::size_t i = 0; i < dy.size(); ++i) (*g)[base + i] += f * dy[i];
      }
      break;
    }
    case OpKind::Embedding:
    case OpKind::EmbeddingRows: {
      if (auto* g = grad_of(0)) {
        const auto cols = value(n.inputs[0]).shape()[1];
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          const auto base = n.indices[r] * cols;
          for (std::size_t c = 0; c < cols; ++c) (*g)[base + c] += f * dy[r * cols + c];
        }
      }
      break;
    }
    case OpKind::Sum: {
      if (auto* g = grad_of(0)) {
        for (auto& x : *g) x += f * dy[0];
      }
      break;
    }
    case OpKind::Softmax: {
      if (auto* g = grad_of(0)) {
        double dot = 0.0;
        for (std::size_t i = 0; i < dy.size(); ++i) dot += dy[i] * n.value[i];
        for (std::size_t i = 0; i < dy.size(); ++i) (*g)[i] += f * n.value[i] * (dy[i] - dot);
      }
      break;
    }
    case OpKind::CrossEntropy: {
      if (auto* g = grad_of(0)) {
        const auto label = n.indices[0];
        (*g)[label] -= f * dy[0] / value(n.inputs[0])[label];
      }
      break;
    }
    case OpKind::SoftmaxCrossEntropy: {
      if (auto* g = grad_of(0)) {
        const Tensor p = multiattn::softmax(value(n.inputs[0]));
        const auto label = n.indices[0];
        for (std::size_t i = 0; i < p.size(); ++i) {
          (*g)[i] += f * dy[0] * (p[i] - (i == label ? 1.0 : 0.0));
        }
      }
      break;
    }
  }
}

}  // namespace multiattn
