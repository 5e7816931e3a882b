#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multiattn/attention.hpp"

namespace multiattn {

enum class Strategy { Concat, Flat, Hierarchical };

std::string_view strategy_name(Strategy s);
/// Accepts "concat", "flat", "hier" and "hierarchical".
Strategy parse_strategy(std::string_view name);

/// One row of the share/sentinel grid. `ctx_dim` is the dimension of the
/// combined context for flat and hierarchical (0 means "use attn_dim").
struct CombinationConfig {
  Strategy strategy = Strategy::Flat;
  bool share_projections = false;
  bool use_sentinel = false;
  std::size_t ctx_dim = 0;

  /// Throws ConfigError for a sentinel on concat, or for sharing with
  /// ctx_dim != attn_dim. Share is ignored (and normalized off) for concat.
  CombinationConfig validated(std::size_t attn_dim) const;
  std::string label() const;
  bool operator==(const CombinationConfig&) const = default;
};

/// All nine valid rows: concat; flat and hierarchical x share x sentinel.
std::vector<CombinationConfig> all_valid_configs();

/// Parameters of a multi-source attention combination.
///
/// Flat and hierarchical share W_a, v_a across encoders and keep a per-encoder
/// U_a^(k). Flat projects states into the context space with U_c^(k);
/// hierarchical adds a second level W_b, v_b, U_b^(k) over the per-encoder
/// contexts and projects them with U_c^(k). With share_projections the
/// context projection reuses the energy projection of the same level
/// (U_c^(k) == U_a^(k) for flat, U_c^(k) == U_b^(k) for hierarchical); the
/// biases of the two uses stay separate.
struct MultiAttentionParams {
  CombinationConfig config;
  std::size_t attn_dim = 0;
  std::size_t query_dim = 0;
  std::vector<std::size_t> encoder_dims;

  // Concat: one independent attention per encoder.
  std::vector<AttentionParams> independent;

  // Flat / hierarchical inner level.
  ParamId w_a = 0, w_a_bias = 0, v_a = 0;
  std::vector<ParamId> u_a, u_a_bias;

  // Context projections (aliases of u_a or u_b when shared).
  std::vector<ParamId> u_c, u_c_bias;

  // Hierarchical outer level.
  ParamId w_b = 0, w_b_bias = 0, v_b = 0;
  std::vector<ParamId> u_b, u_b_bias;

  std::optional<SentinelParams> sentinel;

  std::size_t num_encoders() const noexcept { return encoder_dims.size(); }
  std::size_t context_dim() const;

  static MultiAttentionParams create(ParameterStore& store, const std::string& prefix, const CombinationConfig& config,
                                     std::size_t query_dim, std::size_t embed_dim,
                                     const std::vector<std::size_t>& encoder_dims, std::size_t attn_dim,
                                     SeededRng& rng);
};

/// Result of one combination step.
struct CombinedOutput {
  NodeId context = 0;
  /// Attention mass per encoder, plus the sentinel last when enabled.
  NodeId encoder_mass = 0;
  /// Per-encoder attention distributions (flat: slices of the joint one).
  std::vector<NodeId> alphas;
  std::optional<NodeId> sentinel_alpha;
  std::size_t context_dim = 0;
};

/// Binds a combination to the encoder states of one example. Key
/// projections U h_j are computed once here and reused at every step.
class Combiner {
 public:
  Combiner(Graph& g, const MultiAttentionParams& params, std::vector<EncoderStates> encoders);

  /// Attends with decoder state `query`. Sentinel inputs are required iff
  /// the configuration uses the sentinel.
  CombinedOutput step(NodeId query, std::optional<SentinelInputs> sentinel = std::nullopt);

  const MultiAttentionParams& params() const noexcept { return *params_; }
  const std::vector<EncoderStates>& encoders() const noexcept { return encoders_; }

 private:
  CombinedOutput step_concat(NodeId query);
  CombinedOutput step_flat(NodeId query, std::optional<SentinelInputs> sentinel);
  CombinedOutput step_hierarchical(NodeId query, std::optional<SentinelInputs> sentinel);
  NodeId project_context(NodeId vec, std::size_t k);

  Graph* g_;
  const MultiAttentionParams* params_;
  std::vector<EncoderStates> encoders_;
  std::vector<NodeId> keys_;
};

CombinedOutput combine_concat(Graph& g, NodeId query, const std::vector<EncoderStates>& encoders,
                              const MultiAttentionParams& params);
CombinedOutput combine_flat(Graph& g, NodeId query, const std::vector<EncoderStates>& encoders,
                            const MultiAttentionParams& params,
                            std::optional<SentinelInputs> sentinel = std::nullopt);
CombinedOutput combine_hierarchical(Graph& g, NodeId query, const std::vector<EncoderStates>& encoders,
                                    const MultiAttentionParams& params,
                                    std::optional<SentinelInputs> sentinel = std::nullopt);

}  // namespace multiattn
