#include <gtest/gtest.h>

#include <cmath>

#include "multiattn/adam.hpp"
#include "multiattn/checkpoint.hpp"
#include "multiattn/errors.hpp"
#include "multiattn/generators.hpp"
#include "multiattn/model.hpp"
#include "multiattn/model_check.hpp"
#include "multiattn/training.hpp"
#include "test_support.hpp"

using namespace multiattn;
using namespace multiattn::testing;

namespace {

double loss_of(const MultiSourceModel& m, std::span<const EncodedExample> batch) {
  Graph g(&m.params());
  const auto r = m.forward_loss(g, batch);
  return g.value(r.loss)[0];
}

ModelConfig small_config(CombinationConfig c = {}) {
  ModelConfig mc;
  mc.embed_dim = 8;
  mc.hidden_dim = 8;
  mc.attn_dim = 10;
  mc.decoder_dim = 8;
  mc.combination = c;
  return mc;
}

Dataset small_masked_copy(std::size_t count, std::uint64_t seed = 1) {
  MaskedCopyParams p;
  p.count = count;
  p.seed = seed;
  return gen_masked_copy(p);
}

}  // namespace

TEST(Model, UntrainedLossIsNearUniform) {
  const auto data = small_masked_copy(16);
  MultiSourceModel m(small_config(), data.header.sources, data.header.target_vocab);
  const auto enc = m.encode_all(data.examples);
  const double uniform = std::log(static_cast<double>(m.target_vocab().size()));
  EXPECT_NEAR(loss_of(m, enc), uniform, 0.2 * uniform);
}

TEST(Model, ConstructionIsAPureFunctionOfConfig) {
  const auto data = small_masked_copy(4);
  for (const auto& c : all_valid_configs()) {
    auto mc = small_config(c);
    const MultiSourceModel a(mc, data.header.sources, data.header.target_vocab);
    const MultiSourceModel b(mc, data.header.sources, data.header.target_vocab);
    mc.seed = 99;
    const MultiSourceModel other(mc, data.header.sources, data.header.target_vocab);
    ASSERT_EQ(a.params().size(), b.params().size());
    for (ParamId id = 0; id < a.params().size(); ++id) {
      ASSERT_EQ(a.params().name(id), b.params().name(id));
      ASSERT_EQ(a.params().value(id), b.params().value(id));
      ASSERT_EQ(a.params().name(id), other.params().name(id));
      ASSERT_EQ(a.params().value(id).shape(), other.params().value(id).shape());
    }
    EXPECT_EQ(a.params().scalar_count(), other.params().scalar_count()) << c.label();
    const auto enc = a.encode_all(data.examples);
    EXPECT_EQ(loss_of(a, enc), loss_of(b, enc));
    EXPECT_NE(loss_of(a, enc), loss_of(other, enc));
  }
}

TEST(Model, SharingShrinksTheParameterCount) {
  const auto data = small_masked_copy(2);
  auto count = [&](CombinationConfig c) {
    return MultiSourceModel(small_config(c), data.header.sources, data.header.target_vocab).params().scalar_count();
  };
  const std::size_t enc_dims = 2 * 16;  // two encoders of width 2 * hidden
  for (Strategy s : {Strategy::Flat, Strategy::Hierarchical}) {
    EXPECT_EQ(count({s, false, false, 0}) - count({s, true, false, 0}), 10 * enc_dims);
    EXPECT_EQ(count({s, false, true, 0}) - count({s, true, true, 0}), 10 * enc_dims + 10 * 8);
  }
}

// Straight-line forward pass of a one-source concat model with a plain GRU
// decoder, compared to the graph loss.
TEST(Model, TwoTokenLossMatchesHandOracle) {
  ModelConfig mc = small_config({Strategy::Concat, false, false, 0});
  mc.embed_dim = 3;
  mc.hidden_dim = 4;
  mc.attn_dim = 5;
  mc.decoder_dim = 4;
  mc.decoder = DecoderKind::Gru;
  MultiSourceModel m(mc, {{"a", SourceKind::Tokens, {"p", "q", "r"}, 0}}, {"x", "y"});
  randomize(m.params(), 7);
  const ParallelExample ex{{Sentence{"q", "r", "p"}}, Sentence{"y", "x"}, std::nullopt};
  const auto enc = m.encode(ex);
  const ParameterStore& st = m.params();

  const Tensor& src_embed = st.value(st.id("src0.embed"));
  const std::vector<std::size_t> src_ids{4, 5, 3};
  Vec s(4, 0.0);
  std::vector<Vec> fwd(3), bwd(3);
  for (std::size_t t = 0; t < 3; ++t) fwd[t] = s = oracle_gru(st, gru_by_name(st, "src0.fwd"), row_of(src_embed, src_ids[t]), s);
  s.assign(4, 0.0);
  for (std::size_t t = 3; t-- > 0;) bwd[t] = s = oracle_gru(st, gru_by_name(st, "src0.bwd"), row_of(src_embed, src_ids[t]), s);
  Tensor h(Shape{3, 8});
  for (std::size_t t = 0; t < 3; ++t) {
    const Vec row = concat(fwd[t], bwd[t]);
    for (std::size_t k = 0; k < 8; ++k) h.at(t, k) = row[k];
  }

  const AttentionParams& att = m.combination().independent[0];
  const Tensor& dec_embed = st.value(st.id("dec.embed"));
  const std::vector<std::size_t> inputs{Vocab::kEos, 4, 3};  // <eos>, y, x
  const std::vector<std::size_t> labels{4, 3, Vocab::kEos};
  s.assign(4, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const Vec c = oracle_context(st, att, s, h);
    s = oracle_gru(st, gru_by_name(st, "dec.gru"), concat(row_of(dec_embed, inputs[i]), c), s);
    const Vec logits = add(matvec(st.value(st.id("out.w")), concat(s, c)), vec_of(st.value(st.id("out.b"))));
    total -= std::log(softmax_of(logits)[labels[i]]);
  }
  EXPECT_NEAR(loss_of(m, std::span(&enc, 1)), total / 3.0, 1e-12);
}

TEST(Model, FullModelGradientsPassForEveryConfig) {
  for (DecoderKind d : {DecoderKind::ConditionalGru, DecoderKind::Gru}) {
    for (const auto& c : all_valid_configs()) {
      const auto r = check_model_gradients(c, d);
      EXPECT_LT(r.max_rel_error, 1e-4) << c.label() << " " << decoder_name(d) << " " << r.worst_param;
      EXPECT_GT(r.per_param.size(), 20u);
    }
  }
}

TEST(Model, OverfitsOneBatchForEveryConfig) {
  for (const auto& c : all_valid_configs()) {
    auto setup = tiny_setup(c, DecoderKind::ConditionalGru);
    AdamConfig adam;
    adam.lr = 0.02;
    AdamState state(setup.model.params());
    const std::span batch(&setup.example, 1);
    double loss = loss_of(setup.model, batch);
    for (int step = 0; step < 2000 && loss >= 0.05; ++step) {
      train_step(setup.model, batch, state, adam);
      loss = loss_of(setup.model, batch);
    }
    EXPECT_LT(loss, 0.05) << c.label();
    const auto decoded = setup.model.greedy_decode(setup.example, 10);
    EXPECT_EQ(decoded.tokens, setup.example.target) << c.label();
  }
}

TEST(Model, TraceRowsAreDistributions) {
  const auto data = small_masked_copy(3);
  for (const auto& c : all_valid_configs()) {
    MultiSourceModel m(small_config(c), data.header.sources, data.header.target_vocab);
    const auto enc = m.encode_all(data.examples);
    Graph g(&m.params());
    const auto r = m.forward_loss(g, enc);
    ASSERT_EQ(r.traces.size(), enc.size());
    for (std::size_t i = 0; i < enc.size(); ++i) {
      ASSERT_EQ(r.traces[i].steps(), enc[i].target.size() + 1);
      ASSERT_EQ(r.traces[i].columns, m.trace_columns());
      for (const auto& row : r.traces[i].mass) {
        ASSERT_EQ(row.size(), 2u + (c.use_sentinel ? 1u : 0u));
        double sum = 0.0;
        for (double v : row) sum += v;
        if (c.strategy == Strategy::Concat) {
          EXPECT_NEAR(sum, 1.0, 1e-12);  // uniform report
        } else {
          EXPECT_NEAR(sum, 1.0, 1e-10) << c.label();
        }
      }
    }
  }
}

TEST(Model, GreedyDecodeStopsAtEosAndIsDeterministic) {
  const auto data = small_masked_copy(3);
  MultiSourceModel m(small_config(), data.header.sources, data.header.target_vocab);
  const auto enc = m.encode(data.examples[0]);
  const auto a = m.greedy_decode(enc, 7);
  const auto b = m.greedy_decode(enc, 7);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_LE(a.trace.steps(), 7u);
  EXPECT_THROW(m.greedy_decode(enc, 0), ConfigError);

  // Rig the output layer so <eos> always wins.
  Tensor& bias = m.params().value(m.params().id("out.b"));
  bias[Vocab::kEos] = 1e3;
  const auto rigged = m.greedy_decode(enc, 7);
  EXPECT_TRUE(rigged.tokens.empty());
  ASSERT_EQ(rigged.trace.steps(), 1u);
  EXPECT_EQ(rigged.trace.tokens[0], Vocab::kEos);

  // Ties go to the lowest id: with every logit equal the pad id wins.
  m.params().value(m.params().id("out.w")).fill(0.0);
  bias.fill(0.0);
  const auto tied = m.greedy_decode(enc, 3);
  EXPECT_EQ(tied.tokens, std::vector<std::size_t>(3, Vocab::kPad));
}

TEST(Model, EncodeReportsBadInput) {
  const auto data = small_masked_copy(2);
  const MultiSourceModel m(small_config(), data.header.sources, data.header.target_vocab);
  ParallelExample ex = data.examples[0];
  std::get<Sentence>(ex.sources[1])[0] = "zzz";
  try {
    (void)m.encode(ex);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'zzz'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("source 1 at position 0"), std::string::npos);
  }
  ex = data.examples[0];
  ex.target.clear();
  EXPECT_THROW((void)m.encode(ex), DataError);
  ex = data.examples[0];
  ex.sources.pop_back();
  EXPECT_THROW((void)m.encode(ex), DataError);
  EXPECT_THROW(MultiSourceModel(small_config({Strategy::Concat, false, true, 0}), data.header.sources,
                                data.header.target_vocab),
               ConfigError);
}

TEST(Model, FeatureGridSourceIsSupported) {
  MaskedCopyParams p;
  p.count = 2;
  Dataset data = gen_masked_copy(p);
  data.header.sources[1] = {"grid", SourceKind::Features, {}, 3};
  SeededRng rng(5);
  for (auto& ex : data.examples) ex.sources[1] = random_tensor(rng, {4, 3});
  for (Strategy s : {Strategy::Concat, Strategy::Flat, Strategy::Hierarchical}) {
    MultiSourceModel m(small_config({s, false, false, 0}), data.header.sources, data.header.target_vocab);
    const auto enc = m.encode_all(data.examples);
    EXPECT_TRUE(std::isfinite(loss_of(m, enc)));
    EXPECT_THROW(m.source_vocab(1), ConfigError);
  }
}

// --- checkpoints ------------------------------------------------------------------

class CheckpointTest : public ::testing::Test {
 protected:
  Dataset data = small_masked_copy(6);
  MultiSourceModel model{small_config({Strategy::Hierarchical, true, true, 0}), data.header.sources,
                         data.header.target_vocab};
  void SetUp() override { randomize(model.params(), 17); }
};

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  const auto bytes = save_checkpoint(model);
  const MultiSourceModel back = load_checkpoint(bytes);
  EXPECT_EQ(save_checkpoint(back), bytes);
  EXPECT_EQ(back.config(), model.config());
  EXPECT_EQ(back.sources(), model.sources());
  const auto enc = model.encode_all(data.examples);
  EXPECT_EQ(loss_of(back, enc), loss_of(model, enc));
  EXPECT_EQ(back.greedy_decode(enc[0], 12).tokens, model.greedy_decode(enc[0], 12).tokens);
}

TEST_F(CheckpointTest, CorruptionIsDetected) {
  const auto bytes = save_checkpoint(model);
  auto expect_format_error = [](std::vector<std::uint8_t> b, const std::string& needle) {
    try {
      (void)load_checkpoint(b);
      ADD_FAILURE() << "expected FormatError containing " << needle;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_format_error(std::vector(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2)),
                      "corrupt");
  expect_format_error(std::vector(bytes.begin(), bytes.begin() + 5), "corrupt");
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  expect_format_error(flipped, "corrupt");
  auto version = bytes;
  version[8] = 2;
  expect_format_error(version, "version");
  auto magic = bytes;
  magic[0] = 'X';
  expect_format_error(magic, "magic");
  auto trailing = bytes;
  trailing.push_back(0);
  expect_format_error(trailing, "corrupt");
}

TEST_F(CheckpointTest, FileRoundTripAndCompatibility) {
  const auto dir = std::filesystem::temp_directory_path() / "multiattn_test_model";
  std::filesystem::create_directories(dir);
  save_checkpoint_file(dir / "m.bin", model);
  const auto back = load_checkpoint_file(dir / "m.bin");
  EXPECT_EQ(save_checkpoint(back), save_checkpoint(model));
  EXPECT_NO_THROW(check_compatible(back, data.header));
  DatasetHeader other = data.header;
  other.target_vocab.push_back("extra");
  EXPECT_THROW(check_compatible(back, other), DataError);
  other = data.header;
  other.sources.pop_back();
  EXPECT_THROW(check_compatible(back, other), DataError);
  std::filesystem::remove_all(dir);
}

// --- training loop ---------------------------------------------------------------

TEST(Training, IsDeterministicAndRestoresBestParameters) {
  const auto data = small_masked_copy(40);
  TrainConfig tc;
  tc.adam.lr = 3e-3;
  tc.batch_size = 8;
  tc.max_steps = 30;
  tc.valid_interval = 10;
  auto run = [&] {
    MultiSourceModel m(small_config(), data.header.sources, data.header.target_vocab);
    const auto enc = m.encode_all(data.examples);
    const std::span all(enc);
    auto result = train(m, all.subspan(0, 32), all.subspan(32), tc);
    return std::pair{result, save_checkpoint(m)};
  };
  const auto [a, bytes_a] = run();
  const auto [b, bytes_b] = run();
  EXPECT_EQ(bytes_a, bytes_b);
  ASSERT_EQ(a.curve.size(), 3u);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].valid_loss, b.curve[i].valid_loss);
    EXPECT_EQ(a.curve[i].train_loss, b.curve[i].train_loss);
  }
  double best = a.curve[0].valid_loss;
  for (const auto& p : a.curve) best = std::min(best, p.valid_loss);
  EXPECT_EQ(a.best_valid_loss, best);
  const MultiSourceModel restored = load_checkpoint(bytes_a);
  const auto enc = restored.encode_all(data.examples);
  EXPECT_NEAR(mean_loss(restored, std::span(enc).subspan(32)), best, 1e-12);
}

TEST(Training, DecodeAllDoesNotDependOnThreadCount) {
  const auto data = small_masked_copy(9);
  MultiSourceModel m(small_config(), data.header.sources, data.header.target_vocab);
  randomize(m.params(), 3);
  const auto enc = m.encode_all(data.examples);
  const auto one = decode_all(m, enc, 12, 1);
  const auto four = decode_all(m, enc, 12, 4);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].tokens, four[i].tokens);
    EXPECT_EQ(one[i].trace.mass, four[i].trace.mass);
  }
}

TEST(Training, StepsToAccuracyAndCurveFile) {
  const std::vector<CurvePoint> curve{{10, 2.0, 2.5, 0.5, 0.1}, {20, 1.0, 1.5, 0.91, 0.6}, {30, 0.5, 0.7, 0.95, 0.8}};
  EXPECT_EQ(steps_to_accuracy(curve, 0.9), std::optional<std::size_t>(20));
  EXPECT_FALSE(steps_to_accuracy(curve, 0.99).has_value());
  std::ostringstream out;
  write_curves_tsv(out, curve);
  EXPECT_EQ(out.str(),
            "step\ttrain_loss\tvalid_loss\tvalid_accuracy\tvalid_bleu\n"
            "10\t2\t2.5\t0.5\t0.1\n20\t1\t1.5\t0.91\t0.6\n30\t0.5\t0.7\t0.95\t0.8\n");
}
