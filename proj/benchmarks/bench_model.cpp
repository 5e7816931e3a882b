#include <benchmark/benchmark.h>

#include "multiattn/adam.hpp"
#include "multiattn/generators.hpp"
#include "multiattn/training.hpp"

using namespace multiattn;

namespace {

struct Fixture {
  Dataset data;
  std::unique_ptr<MultiSourceModel> model;
  std::vector<EncodedExample> encoded;

  explicit Fixture(Strategy s, std::size_t count = 32) {
    MaskedCopyParams p;
    p.count = count;
    data = gen_masked_copy(p);
    ModelConfig mc;
    mc.combination.strategy = s;
    model = std::make_unique<MultiSourceModel>(mc, data.header.sources, data.header.target_vocab);
    encoded = model->encode_all(data.examples);
  }
};

Strategy strategy_arg(const benchmark::State& state) { return static_cast<Strategy>(state.range(0)); }

void BM_ForwardLoss(benchmark::State& state) {
  Fixture f(strategy_arg(state));
  for (auto _ : state) {
    Graph g(&f.model->params());
    benchmark::DoNotOptimize(g.value(f.model->forward_loss(g, f.encoded).loss)[0]);
  }
  state.SetLabel(std::string(strategy_name(strategy_arg(state))));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.encoded.size()));
}

void BM_TrainStep(benchmark::State& state) {
  Fixture f(strategy_arg(state));
  AdamState adam(f.model->params());
  const AdamConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(*f.model, f.encoded, adam, config));
  state.SetLabel(std::string(strategy_name(strategy_arg(state))));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.encoded.size()));
}

void BM_GreedyDecode(benchmark::State& state) {
  Fixture f(strategy_arg(state), 8);
  for (auto _ : state) {
    for (const auto& ex : f.encoded) benchmark::DoNotOptimize(f.model->greedy_decode(ex, 16).tokens.size());
  }
  state.SetLabel(std::string(strategy_name(strategy_arg(state))));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.encoded.size()));
}

}  // namespace

#define STRATEGIES                                                                                 \
  Arg(static_cast<int>(Strategy::Concat))->Arg(static_cast<int>(Strategy::Flat))->Arg(            \
      static_cast<int>(Strategy::Hierarchical))

BENCHMARK(BM_ForwardLoss)->STRATEGIES->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep)->STRATEGIES->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GreedyDecode)->STRATEGIES->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
