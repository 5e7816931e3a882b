#include "multiattn/combination.hpp"

#include "multiattn/errors.hpp"
#include "multiattn/init.hpp"

namespace multiattn {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Concat: return "concat";
    case Strategy::Flat: return "flat";
    case Strategy::Hierarchical: return "hier";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "concat") return Strategy::Concat;
  if (name == "flat") return Strategy::Flat;
  if (name == "hier" || name == "hierarchical") return Strategy::Hierarchical;
  throw ConfigError("unknown combination strategy '" + std::string(name) + "' (expected concat|flat|hier)");
}

CombinationConfig CombinationConfig::validated(std::size_t attn_dim) const {
  CombinationConfig out = *this;
  if (attn_dim == 0) throw ConfigError("attention dim must be positive");
  if (strategy == Strategy::Concat) {
    if (use_sentinel) throw ConfigError("the concat strategy does not support a sentinel");
    out.share_projections = false;
    out.ctx_dim = 0;
    return out;
  }
  if (out.ctx_dim == 0) out.ctx_dim = attn_dim;
  if (share_projections && out.ctx_dim != attn_dim) {
    throw ConfigError("share_projections requires ctx_dim (" + std::to_string(out.ctx_dim) + ") == attn_dim (" +
                      std::to_string(attn_dim) + ")");
  }
  return out;
}

std::string CombinationConfig::label() const {
  std::string s(strategy_name(strategy));
  if (strategy == Strategy::Concat) return s;
  s += share_projections ? "+share" : "-share";
  s += use_sentinel ? "+sent" : "-sent";
  return s;
}

std::vector<CombinationConfig> all_valid_configs() {
  std::vector<CombinationConfig> out{{Strategy::Concat, false, false, 0}};
  for (Strategy s : {Strategy::Flat, Strategy::Hierarchical}) {
    for (bool share : {false, true}) {
      for (bool sent : {false, true}) out.push_back({s, share, sent, 0});
    }
  }
  return out;
}

std::size_t MultiAttentionParams::context_dim() const {
  if (config.strategy == Strategy::Concat) {
    std::size_t total = 0;
    for (auto d : encoder_dims) total += d;
    return total;
  }
  return config.ctx_dim;
}

MultiAttentionParams MultiAttentionParams::create(ParameterStore& store, const std::string& prefix,
                                                  const CombinationConfig& config, std::size_t query_dim,
                                                  std::size_t embed_dim, const std::vector<std::size_t>& encoder_dims,
                                                  std::size_t attn_dim, SeededRng& rng) {
  if (encoder_dims.empty()) throw ConfigError("combination needs at least one encoder");
  MultiAttentionParams p;
  p.config = config.validated(attn_dim);
  p.attn_dim = attn_dim;
  p.query_dim = query_dim;
  p.encoder_dims = encoder_dims;
  const auto n = encoder_dims.size();
  const auto ctx = p.config.ctx_dim;

  if (p.config.strategy == Strategy::Concat) {
    for (std::size_t k = 0; k < n; ++k) {
      p.independent.push_back(
          AttentionParams::create(store, prefix + ".enc" + std::to_string(k), query_dim, encoder_dims[k], attn_dim, rng));
    }
    return p;
  }

  const bool hier = p.config.strategy == Strategy::Hierarchical;
  const bool share = p.config.share_projections;

  p.w_a = add_weight(store, prefix + ".w_a", attn_dim, query_dim, rng);
  p.w_a_bias = add_bias(store, prefix + ".b_w_a", attn_dim);
  p.v_a = add_vector_weight(store, prefix + ".v_a", attn_dim, rng);
  for (std::size_t k = 0; k < n; ++k) {
    const auto tag = std::to_string(k);
    p.u_a.push_back(add_weight(store, prefix + ".u_a." + tag, attn_dim, encoder_dims[k], rng));
    p.u_a_bias.push_back(add_bias(store, prefix + ".b_u_a." + tag, attn_dim));
  }
  if (hier) {
    p.w_b = add_weight(store, prefix + ".w_b", attn_dim, query_dim, rng);
    p.w_b_bias = add_bias(store, prefix + ".b_w_b", attn_dim);
    p.v_b = add_vector_weight(store, prefix + ".v_b", attn_dim, rng);
    for (std::size_t k = 0; k < n; ++k) {
      const auto tag = std::to_string(k);
      p.u_b.push_back(add_weight(store, prefix + ".u_b." + tag, attn_dim, encoder_dims[k], rng));
      p.u_b_bias.push_back(add_bias(store, prefix + ".b_u_b." + tag, attn_dim));
    }
  }
  // The energy projection that a shared context projection aliases.
  const auto& energy_proj = hier ? p.u_b : p.u_a;
  for (std::size_t k = 0; k < n; ++k) {
    const auto tag = std::to_string(k);
    p.u_c.push_back(share ? energy_proj[k] : add_weight(store, prefix + ".u_c." + tag, ctx, encoder_dims[k], rng));
    p.u_c_bias.push_back(add_bias(store, prefix + ".b_u_c." + tag, ctx));
  }

  if (p.config.use_sentinel) {
    SentinelParams s = SentinelParams::create(store, prefix + ".sentinel", embed_dim, query_dim, attn_dim, rng);
    s.u_c_psi = share ? s.u_psi : add_weight(store, prefix + ".sentinel.u_c_psi", ctx, query_dim, rng);
    s.u_c_psi_bias = add_bias(store, prefix + ".sentinel.b_u_c_psi", ctx);
    p.sentinel = s;
  }
  return p;
}

// ---------------------------------------------------------------------------

Combiner::Combiner(Graph& g, const MultiAttentionParams& params, std::vector<EncoderStates> encoders)
    : g_(&g), params_(&params), encoders_(std::move(encoders)) {
  if (encoders_.empty()) throw ShapeError("combination: empty encoder list");
  if (encoders_.size() != params.num_encoders()) {
    throw ShapeError("combination: got " + std::to_string(encoders_.size()) + " encoders, parameters expect " +
                     std::to_string(params.num_encoders()));
  }
  for (std::size_t k = 0; k < encoders_.size(); ++k) {
    if (encoders_[k].dim != params.encoder_dims[k]) {
      throw ShapeError("combination: encoder " + std::to_string(k) + " has dim " + std::to_string(encoders_[k].dim) +
                       ", parameters expect " + std::to_string(params.encoder_dims[k]));
    }
    if (encoders_[k].length == 0) throw ShapeError("combination: encoder " + std::to_string(k) + " is empty");
  }
  for (std::size_t k = 0; k < encoders_.size(); ++k) {
    if (params.config.strategy == Strategy::Concat) {
      keys_.push_back(project_keys(g, encoders_[k], params.independent[k].u, params.independent[k].u_bias));
    } else {
      keys_.push_back(project_keys(g, encoders_[k], params.u_a[k], params.u_a_bias[k]));
    }
  }
}

CombinedOutput Combiner::step(NodeId query, std::optional<SentinelInputs> sentinel) {
  const Tensor& q = g_->value(query);
  if (q.rank() != 1 || q.size() != params_->query_dim) {
    throw ShapeError("combination: query has shape " + shape_to_string(q.shape()) + ", expected [" +
                     std::to_string(params_->query_dim) + "]");
  }
  if (params_->config.use_sentinel && !sentinel) throw ConfigError("combination: sentinel inputs required");
  switch (params_->config.strategy) {
    case Strategy::Concat: return step_concat(query);
    case Strategy::Flat: return step_flat(query, sentinel);
    case Strategy::Hierarchical: return step_hierarchical(query, sentinel);
  }
  throw ConfigError("combination: unknown strategy");
}

NodeId Combiner::project_context(NodeId vec, std::size_t k) {
  return g_->affine(g_->parameter(params_->u_c[k]), vec, g_->parameter(params_->u_c_bias[k]));
}

CombinedOutput Combiner::step_concat(NodeId query) {
  Graph& g = *g_;
  const auto n = encoders_.size();
  CombinedOutput out;
  std::vector<NodeId> contexts;
  for (std::size_t k = 0; k < n; ++k) {
    const AttentionParams& ap = params_->independent[k];
    const NodeId pq = project_query(g, query, ap.w, ap.w_bias);
    const NodeId e = energies_from_projections(g, keys_[k], pq, ap.v);
    const NodeId alpha = g.softmax(e);
    out.alphas.push_back(alpha);
    contexts.push_back(g.matmul_tn(encoders_[k].states, alpha));
  }
  out.context = g.concat_rows(contexts);
  // No explicit distribution over encoders exists; report uniform mass.
  out.encoder_mass = g.constant(Tensor::filled(Shape{n}, 1.0 / static_cast<double>(n)));
  out.context_dim = params_->context_dim();
  return out;
}

CombinedOutput Combiner::step_flat(NodeId query, std::optional<SentinelInputs> sentinel) {
  Graph& g = *g_;
  const auto n = encoders_.size();
  const auto& p = *params_;
  const NodeId pq = project_query(g, query, p.w_a, p.w_a_bias);

  std::vector<NodeId> parts;
  for (std::size_t k = 0; k < n; ++k) parts.push_back(energies_from_projections(g, keys_[k], pq, p.v_a));
  std::optional<SentinelEnergy> se;
  if (p.config.use_sentinel) {
    const NodeId psi = sentinel_gate(g, *sentinel, *p.sentinel);
    se = sentinel_energy(g, query, psi, pq, p.sentinel->u_psi, p.sentinel->u_psi_bias, p.v_a);
    parts.push_back(se->energy);
  }
  const NodeId joint = g.softmax(g.concat_rows(parts));

  CombinedOutput out;
  std::vector<NodeId> terms;
  std::vector<NodeId> masses;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const NodeId alpha = g.slice(joint, offset, encoders_[k].length);
    offset += encoders_[k].length;
    out.alphas.push_back(alpha);
    const NodeId mass = g.sum(alpha);
    masses.push_back(mass);
    // sum_j alpha_j (U_c h_j + b_c) = U_c (H^T alpha) + mass * b_c
    const NodeId weighted = g.matmul_tn(encoders_[k].states, alpha);
    const NodeId projected = g.matmul(g.parameter(p.u_c[k]), weighted);
    terms.push_back(g.add(projected, g.scale_by(g.parameter(p.u_c_bias[k]), mass)));
  }
  if (se) {
    const NodeId a_psi = g.element(joint, offset);
    out.sentinel_alpha = a_psi;
    masses.push_back(a_psi);
    const NodeId projected =
        g.affine(g.parameter(*p.sentinel->u_c_psi), se->vector, g.parameter(*p.sentinel->u_c_psi_bias));
    terms.push_back(g.scale_by(projected, a_psi));
  }
  out.context = g.add_n(terms);
  out.encoder_mass = g.concat_rows(masses);
  out.context_dim = p.context_dim();
  return out;
}

CombinedOutput Combiner::step_hierarchical(NodeId query, std::optional<SentinelInputs> sentinel) {
  Graph& g = *g_;
  const auto n = encoders_.size();
  const auto& p = *params_;
  const NodeId pq_inner = project_query(g, query, p.w_a, p.w_a_bias);
  const NodeId pq_outer = project_query(g, query, p.w_b, p.w_b_bias);

  CombinedOutput out;
  std::vector<NodeId> contexts;
  std::vector<NodeId> outer_energies;
  for (std::size_t k = 0; k < n; ++k) {
    const NodeId alpha = g.softmax(energies_from_projections(g, keys_[k], pq_inner, p.v_a));
    out.alphas.push_back(alpha);
    const NodeId ctx = g.matmul_tn(encoders_[k].states, alpha);
    contexts.push_back(ctx);
    const NodeId proj = g.affine(g.parameter(p.u_b[k]), ctx, g.parameter(p.u_b_bias[k]));
    const NodeId hidden = g.tanh(g.add(pq_outer, proj));
    outer_energies.push_back(g.sum(g.mul(hidden, g.parameter(p.v_b))));
  }
  std::optional<SentinelEnergy> se;
  if (p.config.use_sentinel) {
    const NodeId psi = sentinel_gate(g, *sentinel, *p.sentinel);
    se = sentinel_energy(g, query, psi, pq_outer, p.sentinel->u_psi, p.sentinel->u_psi_bias, p.v_b);
    outer_energies.push_back(se->energy);
  }
  const NodeId beta = g.softmax(g.concat_rows(outer_energies));

  std::vector<NodeId> terms;
  for (std::size_t k = 0; k < n; ++k) {
    terms.push_back(g.scale_by(project_context(contexts[k], k), g.element(beta, k)));
  }
  if (se) {
    const NodeId b_psi = g.element(beta, n);
    out.sentinel_alpha = b_psi;
    const NodeId projected =
        g.affine(g.parameter(*p.sentinel->u_c_psi), se->vector, g.parameter(*p.sentinel->u_c_psi_bias));
    terms.push_back(g.scale_by(projected, b_psi));
  }
  out.context = g.add_n(terms);
  out.encoder_mass = beta;
  out.context_dim = p.context_dim();
  return out;
}

CombinedOutput combine_concat(Graph& g, NodeId query, const std::vector<EncoderStates>& encoders,
                              const MultiAttentionParams& params) {
  if (params.config.strategy != Strategy::Concat) throw ConfigError("combine_concat: parameters are not concat");
  return Combiner(g, params, encoders).step(query);
}

CombinedOutput combine_flat(Graph& g, NodeId query, const std::vector<EncoderStates>& encoders,
                            const MultiAttentionParams& params, std::optional<SentinelInputs> sentinel) {
  if (params.config.strategy != Strategy::Flat) throw ConfigError("combine_flat: parameters are not flat");
  return Combiner(g, params, encoders).step(query, sentinel);
}

CombinedOutput combine_hierarchical(Graph& g, NodeId query, const std::vector<EncoderStates>& encoders,
                                    const MultiAttentionParams& params, std::optional<SentinelInputs> sentinel) {
  if (params.config.strategy != Strategy::Hierarchical) {
    throw ConfigError("combine_hierarchical: parameters are not hierarchical");
  }
  return Combiner(g, params, encoders).step(query, sentinel);
}

}  // namespace multiattn
