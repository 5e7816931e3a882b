#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "multiattn/combination.hpp"

namespace multiattn {

/// Gated recurrent unit, reset-before-candidate form:
///   z  = sigmoid(W_z x + b_z + U_z s)
///   r  = sigmoid(W_r x + b_r + U_r s)
///   h~ = tanh(W_h x + b_h + U_h (r * s))
///   s' = (1 - z) * s + z * h~
struct GruParams {
  ParamId w_z = 0, u_z = 0, b_z = 0;
  ParamId w_r = 0, u_r = 0, b_r = 0;
  ParamId w_h = 0, u_h = 0, b_h = 0;
  std::size_t input_dim = 0;
  std::size_t state_dim = 0;

  static GruParams create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                          std::size_t state_dim, SeededRng& rng);
};

NodeId gru_step(Graph& g, NodeId input, NodeId prev_state, const GruParams& params);

/// Runs a forward and a backward GRU over `embedded` (length x input) and
/// concatenates their states per position: H is length x (2 * state_dim).
EncoderStates encode_bidirectional(Graph& g, NodeId embedded, const GruParams& forward, const GruParams& backward,
                                   std::size_t encoder_id = 0);

enum class DecoderKind { Gru, ConditionalGru };

std::string_view decoder_name(DecoderKind kind);
DecoderKind parse_decoder(std::string_view name);

/// Attends with `query`; sentinel inputs are forwarded when present.
using CombineFn = std::function<CombinedOutput(NodeId query, std::optional<SentinelInputs> sentinel)>;

struct DecoderParams {
  DecoderKind kind = DecoderKind::ConditionalGru;
  /// Plain: input = [y; c]. Conditional: first transition, input = y.
  GruParams first;
  /// Conditional only: second transition, input = c.
  std::optional<GruParams> second;
  std::size_t state_dim = 0;

  static DecoderParams create(ParameterStore& store, const std::string& prefix, DecoderKind kind,
                              std::size_t embed_dim, std::size_t context_dim, std::size_t state_dim, SeededRng& rng);
};

struct DecoderStep {
  NodeId state = 0;  // s_i
  NodeId query = 0;  // the state that queried attention
  CombinedOutput combined;
};

/// Plain attentive GRU step: attention is queried with s_{i-1}, then
/// s_i = gru([y_i; c_i], s_{i-1}).
DecoderStep decoder_step_plain(Graph& g, NodeId embedded_input, NodeId prev_state, const CombineFn& combine,
                               const DecoderParams& params, bool with_sentinel);

/// Conditional GRU step: s' = gru_1(y_i, s_{i-1}); attention is queried
/// with s'; s_i = gru_2(c_i, s').
DecoderStep decoder_step_cgru(Graph& g, NodeId embedded_input, NodeId prev_state, const CombineFn& combine,
                              const DecoderParams& params, bool with_sentinel);

/// Dispatches on params.kind.
DecoderStep decoder_step(Graph& g, NodeId embedded_input, NodeId prev_state, const CombineFn& combine,
                         const DecoderParams& params, bool with_sentinel);

}  // namespace multiattn
