#include "multiattn/attention.hpp"

#include <array>

#include "multiattn/errors.hpp"
#include "multiattn/init.hpp"

namespace multiattn {

namespace {

void expect_vector(const Graph& g, NodeId node, std::size_t dim, const char* what) {
  const Tensor& t = g.value(node);
  if (t.rank() != 1 || t.size() != dim) {
    throw ShapeError(std::string(what) + ": expected vector of " + std::to_string(dim) + ", got " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

EncoderStates make_encoder_states(const Graph& g, NodeId states, std::size_t encoder_id) {
  const Tensor& t = g.value(states);
  if (t.rank() != 2) throw ShapeError("encoder states must be a matrix, got " + shape_to_string(t.shape()));
  return EncoderStates{states, t.shape()[0], t.shape()[1], encoder_id};
}

AttentionParams AttentionParams::create(ParameterStore& store, const std::string& prefix, std::size_t query_dim,
                                        std::size_t key_dim, std::size_t attn_dim, SeededRng& rng) {
  if (query_dim == 0 || key_dim == 0 || attn_dim == 0) throw ConfigError(prefix + ": attention dims must be positive");
  AttentionParams p;
  p.w = add_weight(store, prefix + ".w_a", attn_dim, query_dim, rng);
  p.w_bias = add_bias(store, prefix + ".b_w_a", attn_dim);
  p.u = add_weight(store, prefix + ".u_a", attn_dim, key_dim, rng);
  p.u_bias = add_bias(store, prefix + ".b_u_a", attn_dim);
  p.v = add_vector_weight(store, prefix + ".v_a", attn_dim, rng);
  p.attn_dim = attn_dim;
  p.query_dim = query_dim;
  p.key_dim = key_dim;
  return p;
}

SentinelParams SentinelParams::create(ParameterStore& store, const std::string& prefix, std::size_t embed_dim,
                                      std::size_t decoder_dim, std::size_t attn_dim, SeededRng& rng) {
  SentinelParams p;
  p.w_y = add_weight(store, prefix + ".w_y", decoder_dim, embed_dim, rng);
  p.w_s = add_weight(store, prefix + ".w_s", decoder_dim, decoder_dim, rng);
  p.bias = add_bias(store, prefix + ".b_gate", decoder_dim);
  p.u_psi = add_weight(store, prefix + ".u_psi", attn_dim, decoder_dim, rng);
  p.u_psi_bias = add_bias(store, prefix + ".b_u_psi", attn_dim);
  p.decoder_dim = decoder_dim;
  p.embed_dim = embed_dim;
  p.attn_dim = attn_dim;
  return p;
}

NodeId project_query(Graph& g, NodeId query_state, ParamId w, ParamId w_bias) {
  return g.affine(g.parameter(w), query_state, g.parameter(w_bias));
}

NodeId project_keys(Graph& g, const EncoderStates& encoder, ParamId u, ParamId u_bias) {
  return g.affine_rows(encoder.states, g.parameter(u), g.parameter(u_bias));
}

NodeId energies_from_projections(Graph& g, NodeId keys, NodeId projected_query, ParamId v) {
  return g.matmul(g.tanh(g.add_row(keys, projected_query)), g.parameter(v));
}

NodeId energies(Graph& g, NodeId query_state, const EncoderStates& encoder, const AttentionParams& params) {
  expect_vector(g, query_state, params.query_dim, "attention query");
  if (encoder.dim != params.key_dim) {
    throw ShapeError("attention: encoder dim " + std::to_string(encoder.dim) + " does not match key dim " +
                     std::to_string(params.key_dim));
  }
  const NodeId q = project_query(g, query_state, params.w, params.w_bias);
  const NodeId keys = project_keys(g, encoder, params.u, params.u_bias);
  return energies_from_projections(g, keys, q, params.v);
}

AttentionOutput attend(Graph& g, NodeId query_state, const EncoderStates& encoder, const AttentionParams& params) {
  AttentionOutput out;
  out.energies = energies(g, query_state, encoder, params);
  out.alphas = g.softmax(out.energies);
  out.context = g.matmul_tn(encoder.states, out.alphas);
  return out;
}

NodeId sentinel_gate(Graph& g, const SentinelInputs& inputs, const SentinelParams& params) {
  expect_vector(g, inputs.embedded_input, params.embed_dim, "sentinel gate input");
  expect_vector(g, inputs.previous_state, params.decoder_dim, "sentinel gate state");
  const NodeId from_input = g.affine(g.parameter(params.w_y), inputs.embedded_input, g.parameter(params.bias));
  const NodeId from_state = g.matmul(g.parameter(params.w_s), inputs.previous_state);
  return g.sigmoid(g.add(from_input, from_state));
}

SentinelEnergy sentinel_energy(Graph& g, NodeId query_state, NodeId psi, NodeId projected_query, ParamId u_psi,
                               ParamId u_psi_bias, ParamId v) {
  if (g.shape(query_state) != g.shape(psi)) {
    throw ShapeError("sentinel: gate shape " + shape_to_string(g.shape(psi)) + " does not match state " +
                     shape_to_string(g.shape(query_state)));
  }
  SentinelEnergy out;
  out.vector = g.mul(psi, query_state);
  const NodeId projected = g.affine(g.parameter(u_psi), out.vector, g.parameter(u_psi_bias));
  const NodeId hidden = g.tanh(g.add(projected_query, projected));
  out.energy = g.sum(g.mul(hidden, g.parameter(v)));
  return out;
}

AttentionOutput attend_with_sentinel(Graph& g, NodeId query_state, const EncoderStates& encoder,
                                     const AttentionParams& params, const SentinelParams& sentinel,
                                     const SentinelInputs& inputs) {
  if (encoder.dim != sentinel.decoder_dim) {
    throw ShapeError("attend_with_sentinel: encoder dim " + std::to_string(encoder.dim) +
                     " must equal decoder dim " + std::to_string(sentinel.decoder_dim));
  }
  expect_vector(g, query_state, params.query_dim, "attention query");
  const NodeId q = project_query(g, query_state, params.w, params.w_bias);
  const NodeId keys = project_keys(g, encoder, params.u, params.u_bias);
  const NodeId enc_energies = energies_from_projections(g, keys, q, params.v);
  const NodeId psi = sentinel_gate(g, inputs, sentinel);
  const SentinelEnergy se = sentinel_energy(g, query_state, psi, q, sentinel.u_psi, sentinel.u_psi_bias, params.v);

  AttentionOutput out;
  const std::array parts{enc_energies, se.energy};
  out.energies = g.concat_rows(parts);
  out.alphas = g.softmax(out.energies);
  const NodeId enc_alphas = g.slice(out.alphas, 0, encoder.length);
  const NodeId enc_context = g.matmul_tn(encoder.states, enc_alphas);
  const NodeId sent_context = g.scale_by(se.vector, g.element(out.alphas, encoder.length));
  out.context = g.add(enc_context, sent_context);
  return out;
}

}  // namespace multiattn
