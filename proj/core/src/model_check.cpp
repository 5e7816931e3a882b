#include "multiattn/model_check.hpp"

namespace multiattn {

TinySetup tiny_setup(const CombinationConfig& combination, DecoderKind decoder, std::uint64_t seed) {
  ModelConfig c;
  c.embed_dim = 3;
  c.hidden_dim = 4;
  c.attn_dim = 5;
  c.decoder_dim = 4;
  c.combination = combination;
  c.decoder = decoder;
  c.seed = seed;
  const std::vector<std::string> words{"a", "b", "c", "d"};
  std::vector<SourceSchema> sources{{"first", SourceKind::Tokens, words, 0}, {"second", SourceKind::Tokens, words, 0}};
  MultiSourceModel model(c, std::move(sources), words);

  ParallelExample ex;
  ex.sources = {Sentence{"a", "c", "b"}, Sentence{"d", "a"}};
  ex.target = {"b", "d"};
  EncodedExample encoded = model.encode(ex);
  return {std::move(model), std::move(encoded)};
}

GradCheckResult check_model_gradients(const CombinationConfig& combination, DecoderKind decoder,
                                      const GradCheckOptions& options) {
  TinySetup setup = tiny_setup(combination, decoder);
  const auto& model = setup.model;
  const auto& example = setup.example;
  return finite_difference_check(
      setup.model.params(),
      [&](Graph& g) { return model.forward_loss(g, std::span(&example, 1)).loss; }, options);
}

}  // namespace multiattn
