#include "multiattn/model.hpp"

#include <array>

#include "multiattn/errors.hpp"
#include "multiattn/init.hpp"

namespace multiattn {

void ModelConfig::validate() const {
  if (embed_dim == 0 || hidden_dim == 0 || attn_dim == 0 || decoder_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  (void)combination.validated(attn_dim);
}

MultiSourceModel::MultiSourceModel(ModelConfig config, std::vector<SourceSchema> sources,
                                   std::vector<std::string> target_vocab)
    : config_(std::move(config)),
      sources_(std::move(sources)),
      target_tokens_(std::move(target_vocab)),
      target_vocab_(target_tokens_) {
  config_.validate();
  config_.combination = config_.combination.validated(config_.attn_dim);
  if (sources_.empty()) throw ConfigError("model needs at least one source");

  SeededRng rng(config_.seed);
  const auto enc_dim = 2 * config_.hidden_dim;
  std::vector<std::size_t> encoder_dims;
  for (std::size_t k = 0; k < sources_.size(); ++k) {
    const auto& schema = sources_[k];
    const std::string prefix = "src" + std::to_string(k);
    SourceEncoder enc;
    enc.kind = schema.kind;
    if (schema.kind == SourceKind::Tokens) {
      source_vocabs_.emplace_back(schema.vocab);
      enc.embedding = add_weight(params_, prefix + ".embed", source_vocabs_.back().size(), config_.embed_dim, rng);
      enc.forward = GruParams::create(params_, prefix + ".fwd", config_.embed_dim, config_.hidden_dim, rng);
      enc.backward = GruParams::create(params_, prefix + ".bwd", config_.embed_dim, config_.hidden_dim, rng);
    } else {
      if (schema.feature_dim == 0) throw ConfigError("feature source " + prefix + " has zero width");
      source_vocabs_.emplace_back();
      enc.proj_w = add_weight(params_, prefix + ".proj.w", enc_dim, schema.feature_dim, rng);
      enc.proj_b = add_bias(params_, prefix + ".proj.b", enc_dim);
    }
    encoders_.push_back(enc);
    encoder_dims.push_back(enc_dim);
  }

  combination_ = MultiAttentionParams::create(params_, "comb", config_.combination, config_.decoder_dim,
                                              config_.embed_dim, encoder_dims, config_.attn_dim, rng);
  target_embedding_ = add_weight(params_, "dec.embed", target_vocab_.size(), config_.embed_dim, rng);
  decoder_ = DecoderParams::create(params_, "dec", config_.decoder, config_.embed_dim, combination_.context_dim(),
                                   config_.decoder_dim, rng);
  out_w_ = add_weight(params_, "out.w", target_vocab_.size(), config_.decoder_dim + combination_.context_dim(), rng);
  out_b_ = add_bias(params_, "out.b", target_vocab_.size());
}

const Vocab& MultiSourceModel::source_vocab(std::size_t k) const {
  if (k >= sources_.size() || sources_[k].kind != SourceKind::Tokens) {
    throw ConfigError("source " + std::to_string(k) + " has no vocabulary");
  }
  return source_vocabs_[k];
}

std::vector<std::string> MultiSourceModel::trace_columns() const {
  std::vector<std::string> cols;
  for (const auto& s : sources_) cols.push_back(s.name);
  if (config_.combination.use_sentinel) cols.emplace_back("sentinel");
  return cols;
}

EncodedExample MultiSourceModel::encode(const ParallelExample& example) const {
  if (example.sources.size() != sources_.size()) {
    throw DataError("example has " + std::to_string(example.sources.size()) + " sources, model expects " +
                    std::to_string(sources_.size()));
  }
  EncodedExample out;
  for (std::size_t k = 0; k < sources_.size(); ++k) {
    EncodedSource src;
    if (sources_[k].kind == SourceKind::Tokens) {
      const auto* tokens = std::get_if<Sentence>(&example.sources[k]);
      if (tokens == nullptr || tokens->empty()) throw DataError("source " + std::to_string(k) + " needs tokens");
      for (std::size_t i = 0; i < tokens->size(); ++i) {
        const auto id = source_vocabs_[k].find((*tokens)[i]);
        if (!id) {
          throw DataError("out-of-vocabulary token '" + (*tokens)[i] + "' in source " + std::to_string(k) +
                          " at position " + std::to_string(i));
        }
        src.ids.push_back(*id);
      }
    } else {
      const auto* grid = std::get_if<Tensor>(&example.sources[k]);
      if (grid == nullptr || grid->rank() != 2 || grid->cols() != sources_[k].feature_dim) {
        throw DataError("source " + std::to_string(k) + " needs a feature grid of width " +
                        std::to_string(sources_[k].feature_dim));
      }
      src.features = *grid;
    }
    out.sources.push_back(std::move(src));
  }
  if (example.target.empty()) throw DataError("empty target");
  for (std::size_t i = 0; i < example.target.size(); ++i) {
    const auto id = target_vocab_.find(example.target[i]);
    if (!id) {
      throw DataError("out-of-vocabulary token '" + example.target[i] + "' in target at position " +
                      std::to_string(i));
    }
    out.target.push_back(*id);
  }
  return out;
}

std::vector<EncodedExample> MultiSourceModel::encode_all(std::span<const ParallelExample> examples) const {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode(ex));
  return out;
}

void MultiSourceModel::check_ids(const EncodedExample& ex) const {
  if (ex.sources.size() != sources_.size()) throw DataError("encoded example has the wrong number of sources");
  for (std::size_t k = 0; k < sources_.size(); ++k) {
    if (sources_[k].kind == SourceKind::Tokens) {
      if (ex.sources[k].ids.empty()) throw DataError("source " + std::to_string(k) + " is empty");
      for (std::size_t i = 0; i < ex.sources[k].ids.size(); ++i) {
        if (ex.sources[k].ids[i] >= source_vocabs_[k].size()) {
          throw DataError("out-of-vocabulary id " + std::to_string(ex.sources[k].ids[i]) + " in source " +
                          std::to_string(k) + " at position " + std::to_string(i));
        }
      }
    } else if (!ex.sources[k].features) {
      throw DataError("source " + std::to_string(k) + " is missing its feature grid");
    }
  }
  for (std::size_t i = 0; i < ex.target.size(); ++i) {
    if (ex.target[i] >= target_vocab_.size()) {
      throw DataError("out-of-vocabulary id " + std::to_string(ex.target[i]) + " in target at position " +
                      std::to_string(i));
    }
  }
}

std::vector<EncoderStates> MultiSourceModel::encode_sources(Graph& g, const EncodedExample& ex) const {
  std::vector<EncoderStates> states;
  for (std::size_t k = 0; k < sources_.size(); ++k) {
    const auto& enc = encoders_[k];
    if (enc.kind == SourceKind::Tokens) {
      const NodeId embedded = g.embedding_rows(g.parameter(enc.embedding), ex.sources[k].ids);
      states.push_back(encode_bidirectional(g, embedded, enc.forward, enc.backward, k));
    } else {
      const NodeId grid = g.constant(*ex.sources[k].features);
      const NodeId projected = g.affine_rows(grid, g.parameter(enc.proj_w), g.parameter(enc.proj_b));
      states.push_back(make_encoder_states(g, projected, k));
    }
  }
  return states;
}

NodeId MultiSourceModel::readout(Graph& g, NodeId state, NodeId context) const {
  const std::array parts{state, context};
  return g.affine(g.parameter(out_w_), g.concat_rows(parts), g.parameter(out_b_));
}

ForwardResult MultiSourceModel::forward_loss(Graph& g, std::span<const EncodedExample> batch) const {
  if (batch.empty()) throw DataError("forward_loss: empty batch");
  ForwardResult result;
  std::vector<NodeId> losses;
  const bool sentinel = config_.combination.use_sentinel;
  const NodeId embed_table = g.parameter(target_embedding_);

  for (const auto& ex : batch) {
    if (ex.target.empty()) throw DataError("forward_loss: empty target");
    check_ids(ex);
    Combiner combiner(g, combination_, encode_sources(g, ex));
    const CombineFn combine = [&](NodeId q, std::optional<SentinelInputs> s) { return combiner.step(q, s); };

    // Inputs: EOS (as start symbol) followed by the gold prefix.
    std::vector<std::size_t> inputs{Vocab::kEos};
    inputs.insert(inputs.end(), ex.target.begin(), ex.target.end() - 1);
    std::vector<std::size_t> labels = ex.target;
    labels.push_back(Vocab::kEos);
    inputs.push_back(ex.target.back());
    const NodeId embedded = g.embedding_rows(embed_table, inputs);

    AttentionTrace trace;
    trace.columns = trace_columns();
    NodeId state = g.constant(Tensor(Shape{config_.decoder_dim}));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const DecoderStep step = decoder_step(g, g.row(embedded, i), state, combine, decoder_, sentinel);
      state = step.state;
      losses.push_back(g.softmax_cross_entropy(readout(g, state, step.combined.context), labels[i]));
      const Tensor& mass = g.value(step.combined.encoder_mass);
      trace.mass.emplace_back(mass.data().begin(), mass.data().end());
      trace.tokens.push_back(labels[i]);
    }
    result.tokens += labels.size();
    result.traces.push_back(std::move(trace));
  }
  result.loss = g.scale(g.add_n(losses), 1.0 / static_cast<double>(result.tokens));
  return result;
}

DecodeResult MultiSourceModel::greedy_decode(const EncodedExample& example, std::size_t max_len) const {
  if (max_len == 0) throw ConfigError("greedy_decode: max_len must be at least 1");
  EncodedExample ex = example;
  ex.target.clear();
  check_ids(ex);

  Graph g(&params_);
  Combiner combiner(g, combination_, encode_sources(g, ex));
  const CombineFn combine = [&](NodeId q, std::optional<SentinelInputs> s) { return combiner.step(q, s); };
  const bool sentinel = config_.combination.use_sentinel;
  const NodeId embed_table = g.parameter(target_embedding_);

  DecodeResult out;
  out.trace.columns = trace_columns();
  NodeId state = g.constant(Tensor(Shape{config_.decoder_dim}));
  std::size_t previous = Vocab::kEos;
  for (std::size_t i = 0; i < max_len; ++i) {
    const NodeId y = g.embedding_lookup(embed_table, previous);
    const DecoderStep step = decoder_step(g, y, state, combine, decoder_, sentinel);
    state = step.state;
    const Tensor& logits = g.value(readout(g, state, step.combined.context));
    std::size_t best = 0;
    for (std::size_t v = 1; v < logits.size(); ++v) {
      if (logits[v] > logits[best]) best = v;
    }
    const Tensor& mass = g.value(step.combined.encoder_mass);
    out.trace.mass.emplace_back(mass.data().begin(), mass.data().end());
    out.trace.tokens.push_back(best);
    if (best == Vocab::kEos) break;
    out.tokens.push_back(best);
    previous = best;
  }
  return out;
}

Sentence MultiSourceModel::detokenize(std::span<const std::size_t> ids) const {
  Sentence out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(target_vocab_.token(id));
  return out;
}

}  // namespace multiattn
