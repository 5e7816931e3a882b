#include "multiattn/recurrent.hpp"

#include <array>

#include "multiattn/errors.hpp"
#include "multiattn/init.hpp"

namespace multiattn {

GruParams GruParams::create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                            std::size_t state_dim, SeededRng& rng) {
  if (input_dim == 0 || state_dim == 0) throw ConfigError(prefix + ": GRU dims must be positive");
  GruParams p;
  p.w_z = add_weight(store, prefix + ".w_z", state_dim, input_dim, rng);
  p.u_z = add_weight(store, prefix + ".u_z", state_dim, state_dim, rng);
  p.b_z = add_bias(store, prefix + ".b_z", state_dim);
  p.w_r = add_weight(store, prefix + ".w_r", state_dim, input_dim, rng);
  p.u_r = add_weight(store, prefix + ".u_r", state_dim, state_dim, rng);
  p.b_r = add_bias(store, prefix + ".b_r", state_dim);
  p.w_h = add_weight(store, prefix + ".w_h", state_dim, input_dim, rng);
  p.u_h = add_weight(store, prefix + ".u_h", state_dim, state_dim, rng);
  p.b_h = add_bias(store, prefix + ".b_h", state_dim);
  p.input_dim = input_dim;
  p.state_dim = state_dim;
  return p;
}

namespace {

// Transition given the input-side pre-activations W x + b of each gate.
NodeId gru_transition(Graph& g, NodeId xz, NodeId xr, NodeId xh, NodeId prev, const GruParams& p) {
  const NodeId z = g.sigmoid(g.add(xz, g.matmul(g.parameter(p.u_z), prev)));
  const NodeId r = g.sigmoid(g.add(xr, g.matmul(g.parameter(p.u_r), prev)));
  const NodeId candidate = g.tanh(g.add(xh, g.matmul(g.parameter(p.u_h), g.mul(r, prev))));
  // (1 - z) * s + z * h~ == s + z * (h~ - s)
  return g.add(prev, g.mul(z, g.sub(candidate, prev)));
}

void expect_vector(const Graph& g, NodeId node, std::size_t dim, const char* what) {
  const Tensor& t = g.value(node);
  if (t.rank() != 1 || t.size() != dim) {
    throw ShapeError(std::string(what) + ": expected vector of " + std::to_string(dim) + ", got " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

NodeId gru_step(Graph& g, NodeId input, NodeId prev_state, const GruParams& p) {
  expect_vector(g, input, p.input_dim, "gru input");
  expect_vector(g, prev_state, p.state_dim, "gru state");
  const NodeId xz = g.affine(g.parameter(p.w_z), input, g.parameter(p.b_z));
  const NodeId xr = g.affine(g.parameter(p.w_r), input, g.parameter(p.b_r));
  const NodeId xh = g.affine(g.parameter(p.w_h), input, g.parameter(p.b_h));
  return gru_transition(g, xz, xr, xh, prev_state, p);
}

EncoderStates encode_bidirectional(Graph& g, NodeId embedded, const GruParams& forward, const GruParams& backward,
                                   std::size_t encoder_id) {
  const Tensor& x = g.value(embedded);
  if (x.rank() != 2) throw ShapeError("encoder input must be a (length x dim) matrix, got " + shape_to_string(x.shape()));
  const auto length = x.shape()[0];
  if (x.shape()[1] != forward.input_dim || x.shape()[1] != backward.input_dim) {
    throw ShapeError("encoder input dim " + std::to_string(x.shape()[1]) + " does not match GRU input dims");
  }

  // Input projections for all positions at once, then one row per step.
  struct Projected {
    NodeId z, r, h;
  };
  auto project = [&](const GruParams& p) {
    return Projected{g.affine_rows(embedded, g.parameter(p.w_z), g.parameter(p.b_z)),
                     g.affine_rows(embedded, g.parameter(p.w_r), g.parameter(p.b_r)),
                     g.affine_rows(embedded, g.parameter(p.w_h), g.parameter(p.b_h))};
  };
  const Projected fp = project(forward);
  const Projected bp = project(backward);

  std::vector<NodeId> fwd(length), bwd(length);
  NodeId state = g.constant(Tensor(Shape{forward.state_dim}));
  for (std::size_t t = 0; t < length; ++t) {
    state = gru_transition(g, g.row(fp.z, t), g.row(fp.r, t), g.row(fp.h, t), state, forward);
    fwd[t] = state;
  }
  state = g.constant(Tensor(Shape{backward.state_dim}));
  for (std::size_t t = length; t-- > 0;) {
    state = gru_transition(g, g.row(bp.z, t), g.row(bp.r, t), g.row(bp.h, t), state, backward);
    bwd[t] = state;
  }
  std::vector<NodeId> rows(length);
  for (std::size_t t = 0; t < length; ++t) {
    const std::array pair{fwd[t], bwd[t]};
    rows[t] = g.concat_rows(pair);
  }
  return make_encoder_states(g, g.stack_rows(rows), encoder_id);
}

std::string_view decoder_name(DecoderKind kind) { return kind == DecoderKind::Gru ? "gru" : "cgru"; }

DecoderKind parse_decoder(std::string_view name) {
  if (name == "gru") return DecoderKind::Gru;
  if (name == "cgru") return DecoderKind::ConditionalGru;
  throw ConfigError("unknown decoder '" + std::string(name) + "' (expected gru|cgru)");
}

DecoderParams DecoderParams::create(ParameterStore& store, const std::string& prefix, DecoderKind kind,
                                    std::size_t embed_dim, std::size_t context_dim, std::size_t state_dim,
                                    SeededRng& rng) {
  DecoderParams p;
  p.kind = kind;
  p.state_dim = state_dim;
  if (kind == DecoderKind::Gru) {
    p.first = GruParams::create(store, prefix + ".gru", embed_dim + context_dim, state_dim, rng);
  } else {
    p.first = GruParams::create(store, prefix + ".gru1", embed_dim, state_dim, rng);
    p.second = GruParams::create(store, prefix + ".gru2", context_dim, state_dim, rng);
  }
  return p;
}

DecoderStep decoder_step_plain(Graph& g, NodeId embedded_input, NodeId prev_state, const CombineFn& combine,
                               const DecoderParams& params, bool with_sentinel) {
  if (params.kind != DecoderKind::Gru) throw ConfigError("decoder_step_plain: parameters are for a conditional GRU");
  DecoderStep out;
  out.query = prev_state;
  std::optional<SentinelInputs> sent;
  if (with_sentinel) sent = SentinelInputs{embedded_input, prev_state};
  out.combined = combine(prev_state, sent);
  const std::array parts{embedded_input, out.combined.context};
  out.state = gru_step(g, g.concat_rows(parts), prev_state, params.first);
  return out;
}

DecoderStep decoder_step_cgru(Graph& g, NodeId embedded_input, NodeId prev_state, const CombineFn& combine,
                              const DecoderParams& params, bool with_sentinel) {
  if (params.kind != DecoderKind::ConditionalGru || !params.second) {
    throw ConfigError("decoder_step_cgru: parameters are for a plain GRU");
  }
  DecoderStep out;
  out.query = gru_step(g, embedded_input, prev_state, params.first);
  std::optional<SentinelInputs> sent;
  if (with_sentinel) sent = SentinelInputs{embedded_input, prev_state};
  out.combined = combine(out.query, sent);
  out.state = gru_step(g, out.combined.context, out.query, *params.second);
  return out;
}

DecoderStep decoder_step(Graph& g, NodeId embedded_input, NodeId prev_state, const CombineFn& combine,
                         const DecoderParams& params, bool with_sentinel) {
  return params.kind == DecoderKind::Gru
             ? decoder_step_plain(g, embedded_input, prev_state, combine, params, with_sentinel)
             : decoder_step_cgru(g, embedded_input, prev_state, combine, params, with_sentinel);
}

}  // namespace multiattn
