#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "multiattn/graph.hpp"
#include "multiattn/rng.hpp"

namespace multiattn {

/// Hidden states of one encoder as a graph node of shape (length x dim).
struct EncoderStates {
  NodeId states = 0;
  std::size_t length = 0;
  std::size_t dim = 0;
  std::size_t encoder_id = 0;
};

/// Wraps an existing (length x dim) node, validating its shape.
EncoderStates make_encoder_states(const Graph& g, NodeId states, std::size_t encoder_id);

/// Additive attention parameters:
///   e_j = v^T tanh(W s + b_w + U h_j + b_u)
struct AttentionParams {
  ParamId w = 0;       // attn x query
  ParamId w_bias = 0;  // attn
  ParamId u = 0;       // attn x key
  ParamId u_bias = 0;  // attn
  ParamId v = 0;       // attn
  std::size_t attn_dim = 0;
  std::size_t query_dim = 0;
  std::size_t key_dim = 0;

  static AttentionParams create(ParameterStore& store, const std::string& prefix, std::size_t query_dim,
                                std::size_t key_dim, std::size_t attn_dim, SeededRng& rng);
};

/// Sentinel gate psi = sigmoid(W_y y + W_s s_prev + b) and the projections
/// of the sentinel vector psi * s into the energy space (u_psi) and, for the
/// combination strategies, into the context space (u_c_psi).
struct SentinelParams {
  ParamId w_y = 0;     // decoder x embed
  ParamId w_s = 0;     // decoder x decoder
  ParamId bias = 0;    // decoder
  ParamId u_psi = 0;   // attn x decoder
  ParamId u_psi_bias = 0;
  std::optional<ParamId> u_c_psi;  // ctx x decoder
  std::optional<ParamId> u_c_psi_bias;
  std::size_t decoder_dim = 0;
  std::size_t embed_dim = 0;
  std::size_t attn_dim = 0;

  static SentinelParams create(ParameterStore& store, const std::string& prefix, std::size_t embed_dim,
                               std::size_t decoder_dim, std::size_t attn_dim, SeededRng& rng);
};

/// Decoder-side inputs to the sentinel gate.
struct SentinelInputs {
  NodeId embedded_input = 0;  // y_i
  NodeId previous_state = 0;  // s_{i-1}
};

struct AttentionOutput {
  NodeId energies = 0;  // length T (+1 with sentinel, sentinel last)
  NodeId alphas = 0;
  NodeId context = 0;
};

/// W s + b_w, evaluated once per decoder step and shared by every energy.
NodeId project_query(Graph& g, NodeId query_state, ParamId w, ParamId w_bias);

/// Rows U h_j + b_u for all encoder positions (length x attn).
NodeId project_keys(Graph& g, const EncoderStates& encoder, ParamId u, ParamId u_bias);

/// v^T tanh(keys_j + query) for every row j.
NodeId energies_from_projections(Graph& g, NodeId keys, NodeId projected_query, ParamId v);

NodeId energies(Graph& g, NodeId query_state, const EncoderStates& encoder, const AttentionParams& params);

AttentionOutput attend(Graph& g, NodeId query_state, const EncoderStates& encoder, const AttentionParams& params);

/// psi_i, elementwise in (0, 1).
NodeId sentinel_gate(Graph& g, const SentinelInputs& inputs, const SentinelParams& params);

struct SentinelEnergy {
  NodeId energy = 0;  // scalar e_psi
  NodeId vector = 0;  // psi * s
};

/// e_psi = v^T tanh(W s + b_w + U_psi (psi * s) + b_psi). `projected_query`
/// must be W s + b_w for the same s.
SentinelEnergy sentinel_energy(Graph& g, NodeId query_state, NodeId psi, NodeId projected_query, ParamId u_psi,
                               ParamId u_psi_bias, ParamId v);

/// Single-encoder attention with the sentinel competing for mass. The
/// sentinel vector enters the weighted sum directly, so the encoder and
/// decoder dimensions must agree.
AttentionOutput attend_with_sentinel(Graph& g, NodeId query_state, const EncoderStates& encoder,
                                     const AttentionParams& params, const SentinelParams& sentinel,
                                     const SentinelInputs& inputs);

}  // namespace multiattn
