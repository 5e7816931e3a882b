#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multiattn/combination.hpp"
#include "multiattn/dataset.hpp"
#include "multiattn/recurrent.hpp"
#include "multiattn/trace.hpp"
#include "multiattn/vocab.hpp"

namespace multiattn {

/// Architecture hyperparameters. Defaults are the desk-scale sizes; the
/// original large setting is hidden 300, embed 300, attn 500, decoder 500.
struct ModelConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;  // per encoder direction
  std::size_t attn_dim = 64;
  std::size_t decoder_dim = 32;
  CombinationConfig combination;
  DecoderKind decoder = DecoderKind::ConditionalGru;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Source of an example mapped to ids (token sources) or kept as a grid.
struct EncodedSource {
  std::vector<std::size_t> ids;
  std::optional<Tensor> features;
};

struct EncodedExample {
  std::vector<EncodedSource> sources;
  std::vector<std::size_t> target;  // without the closing EOS
};

struct ForwardResult {
  NodeId loss = 0;       // mean token cross-entropy over the batch
  std::size_t tokens = 0;  // target tokens scored, EOS included
  std::vector<AttentionTrace> traces;
};

struct DecodeResult {
  std::vector<std::size_t> tokens;  // EOS stripped
  AttentionTrace trace;             // one row per emitted symbol, EOS included
};

/// Embeddings, one encoder per source, the attention combination, the
/// decoder and the output layer softmax(W_o [s_i; c_i] + b_o).
///
/// Text sources go through a bidirectional GRU (state 2 * hidden_dim).
/// Feature-grid sources pass through one trainable affine layer into the
/// same 2 * hidden_dim space, each grid cell acting as an encoder state.
class MultiSourceModel {
 public:
  /// Builds and initializes parameters deterministically from config.seed.
  MultiSourceModel(ModelConfig config, std::vector<SourceSchema> sources, std::vector<std::string> target_vocab);

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<SourceSchema>& sources() const noexcept { return sources_; }
  const std::vector<std::string>& target_tokens() const noexcept { return target_tokens_; }
  const Vocab& target_vocab() const noexcept { return target_vocab_; }
  const Vocab& source_vocab(std::size_t k) const;
  std::size_t num_sources() const noexcept { return sources_.size(); }

  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }
  const MultiAttentionParams& combination() const noexcept { return combination_; }

  /// Throws DataError naming the token and its position when it is not in
  /// the vocabulary, or when the example does not fit the source schema.
  EncodedExample encode(const ParallelExample& example) const;
  std::vector<EncodedExample> encode_all(std::span<const ParallelExample> examples) const;

  /// Teacher-forced mean token cross-entropy and per-step attention traces.
  ForwardResult forward_loss(Graph& g, std::span<const EncodedExample> batch) const;

  /// Greedy decoding; ties go to the lowest token id. Stops at EOS or after
  /// max_len symbols.
  DecodeResult greedy_decode(const EncodedExample& example, std::size_t max_len) const;

  /// Hypothesis tokens as strings.
  Sentence detokenize(std::span<const std::size_t> ids) const;

  std::vector<std::string> trace_columns() const;

 private:
  std::vector<EncoderStates> encode_sources(Graph& g, const EncodedExample& ex) const;
  NodeId readout(Graph& g, NodeId state, NodeId context) const;
  void check_ids(const EncodedExample& ex) const;

  struct SourceEncoder {
    SourceKind kind = SourceKind::Tokens;
    ParamId embedding = 0;
    GruParams forward, backward;
    ParamId proj_w = 0, proj_b = 0;
  };

  ModelConfig config_;
  std::vector<SourceSchema> sources_;
  std::vector<std::string> target_tokens_;
  std::vector<Vocab> source_vocabs_;  // empty Vocab for feature sources
  Vocab target_vocab_;

  ParameterStore params_;
  std::vector<SourceEncoder> encoders_;
  MultiAttentionParams combination_;
  ParamId target_embedding_ = 0;
  DecoderParams decoder_;
  ParamId out_w_ = 0, out_b_ = 0;
};

}  // namespace multiattn
