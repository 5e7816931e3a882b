#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "multiattn/errors.hpp"
#include "multiattn/gradcheck.hpp"
#include "multiattn/recurrent.hpp"
#include "test_support.hpp"

using namespace multiattn;
using namespace multiattn::testing;

TEST(Gru, ZeroParametersAndStateStayZero) {
  ParameterStore store;
  SeededRng rng(1);
  const auto p = GruParams::create(store, "g", 3, 4, rng);
  for (ParamId id = 0; id < store.size(); ++id) store.value(id).fill(0.0);
  Graph g(&store);
  const Tensor s = g.value(gru_step(g, g.constant(random_tensor(rng, {3})), g.constant(Tensor(Shape{4})), p));
  EXPECT_EQ(s, Tensor(Shape{4}));
}

TEST(Gru, ClosedUpdateGateKeepsState) {
  ParameterStore store;
  SeededRng rng(2);
  const auto p = GruParams::create(store, "g", 3, 4, rng);
  randomize(store, 3);
  store.value(p.b_z).fill(-800.0);
  const Tensor prev = random_tensor(rng, {4});
  Graph g(&store);
  const Tensor s = g.value(gru_step(g, g.constant(random_tensor(rng, {3})), g.constant(prev), p));
  EXPECT_LT(max_abs_diff(s, prev), 1e-6);
}

TEST(Gru, MatchesStraightLineFormula) {
  SeededRng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    ParameterStore store;
    const auto p = GruParams::create(store, "g", 3, 5, rng);
    randomize(store, 10 + trial, 1.0);
    const Tensor x = random_tensor(rng, {3});
    const Tensor s = random_tensor(rng, {5});
    Graph g(&store);
    const Tensor out = g.value(gru_step(g, g.constant(x), g.constant(s), p));
    EXPECT_LT(max_abs_diff(out.data(), oracle_gru(store, p, vec_of(x), vec_of(s))), 1e-12);
  }
}

TEST(Gru, PropertyStateStaysInOpenUnitBox) {
  SeededRng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore store;
    const auto p = GruParams::create(store, "g", 3, 6, rng);
    randomize(store, 100 + trial, 1.0);
    Graph g(&store);
    NodeId s = g.constant(Tensor(Shape{6}));
    for (int step = 0; step < 100; ++step) {
      s = gru_step(g, g.constant(random_tensor(rng, {3}, 2.0)), s, p);
      for (double v : g.value(s).data()) ASSERT_LT(std::abs(v), 1.0);
    }
  }
}

TEST(Gru, SaturatedInputsNeverLeaveClosedUnitBox) {
  // Far in the tails tanh rounds to exactly +-1 in double precision.
  SeededRng rng(55);
  ParameterStore store;
  const auto p = GruParams::create(store, "g", 3, 6, rng);
  randomize(store, 56, 5.0);
  Graph g(&store);
  NodeId s = g.constant(Tensor(Shape{6}));
  for (int step = 0; step < 100; ++step) {
    s = gru_step(g, g.constant(random_tensor(rng, {3}, 100.0)), s, p);
    for (double v : g.value(s).data()) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_LE(std::abs(v), 1.0);
    }
  }
}

TEST(Gru, DimensionMismatchIsAnError) {
  ParameterStore store;
  SeededRng rng(6);
  const auto p = GruParams::create(store, "g", 3, 4, rng);
  Graph g(&store);
  EXPECT_THROW(gru_step(g, g.constant(Tensor(Shape{4})), g.constant(Tensor(Shape{4})), p), ShapeError);
  EXPECT_THROW(gru_step(g, g.constant(Tensor(Shape{3})), g.constant(Tensor(Shape{3})), p), ShapeError);
}

// --- bidirectional encoder ------------------------------------------------------

struct BiRig {
  ParameterStore store;
  GruParams fwd, bwd;
  explicit BiRig(std::uint64_t seed) {
    SeededRng rng(seed);
    fwd = GruParams::create(store, "f", 3, 4, rng);
    bwd = GruParams::create(store, "b", 3, 4, rng);
    randomize(store, seed + 1, 1.0);
  }
};

TEST(Bidirectional, LengthOneUsesOneStepPerDirection) {
  BiRig rig(7);
  SeededRng rng(8);
  const Tensor x = random_tensor(rng, {1, 3});
  Graph g(&rig.store);
  const auto enc = encode_bidirectional(g, g.constant(x), rig.fwd, rig.bwd);
  ASSERT_EQ(g.shape(enc.states), (Shape{1, 8}));
  const Vec zero(4, 0.0);
  const Vec expected = concat(oracle_gru(rig.store, rig.fwd, row_of(x, 0), zero),
                              oracle_gru(rig.store, rig.bwd, row_of(x, 0), zero));
  EXPECT_LT(max_abs_diff(g.value(enc.states).data(), expected), 1e-12);
}

TEST(Bidirectional, MatchesPerDirectionRecurrence) {
  BiRig rig(9);
  SeededRng rng(10);
  const std::size_t len = 6;
  const Tensor x = random_tensor(rng, {len, 3});
  Graph g(&rig.store);
  const auto enc = encode_bidirectional(g, g.constant(x), rig.fwd, rig.bwd, 3);
  EXPECT_EQ(enc.encoder_id, 3u);
  EXPECT_EQ(enc.length, len);
  EXPECT_EQ(enc.dim, 8u);
  std::vector<Vec> f(len), b(len);
  Vec s(4, 0.0);
  for (std::size_t t = 0; t < len; ++t) f[t] = s = oracle_gru(rig.store, rig.fwd, row_of(x, t), s);
  s.assign(4, 0.0);
  for (std::size_t t = len; t-- > 0;) b[t] = s = oracle_gru(rig.store, rig.bwd, row_of(x, t), s);
  const Tensor& h = g.value(enc.states);
  for (std::size_t t = 0; t < len; ++t) EXPECT_LT(max_abs_diff(row_of(h, t), concat(f[t], b[t])), 1e-12);
}

TEST(Bidirectional, ReversedInputSwapsDirections) {
  SeededRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    BiRig rig(20 + trial);
    const std::size_t len = 1 + rng.below(8);
    const Tensor x = random_tensor(rng, {len, 3});
    Tensor rev(Shape{len, 3});
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < 3; ++c) rev.at(t, c) = x.at(len - 1 - t, c);
    }
    Graph g(&rig.store);
    const Tensor h = g.value(encode_bidirectional(g, g.constant(x), rig.fwd, rig.bwd).states);
    // Swapping the parameter sets along with the input order swaps the halves.
    const Tensor hr = g.value(encode_bidirectional(g, g.constant(rev), rig.bwd, rig.fwd).states);
    for (std::size_t t = 0; t < len; ++t) {
      const Vec a = row_of(h, len - 1 - t);
      const Vec b = row_of(hr, t);
      const Vec swapped = concat(Vec(a.begin() + 4, a.end()), Vec(a.begin(), a.begin() + 4));
      ASSERT_LT(max_abs_diff(b, swapped), 1e-12);
    }
  }
}

TEST(Bidirectional, ZeroInputsAndParametersGiveZeros) {
  BiRig rig(12);
  for (ParamId id = 0; id < rig.store.size(); ++id) rig.store.value(id).fill(0.0);
  Graph g(&rig.store);
  const auto enc = encode_bidirectional(g, g.constant(Tensor(Shape{5, 3})), rig.fwd, rig.bwd);
  EXPECT_EQ(g.value(enc.states), Tensor(Shape{5, 8}));
}

TEST(Bidirectional, InputWidthMustMatch) {
  BiRig rig(13);
  Graph g(&rig.store);
  EXPECT_THROW(encode_bidirectional(g, g.constant(Tensor(Shape{2, 4})), rig.fwd, rig.bwd), ShapeError);
  EXPECT_THROW(encode_bidirectional(g, g.constant(Tensor(Shape{4})), rig.fwd, rig.bwd), ShapeError);
}

// --- decoder steps -----------------------------------------------------------------

namespace {

constexpr std::size_t kEmbed = 3;
constexpr std::size_t kState = 4;
constexpr std::size_t kEnc = 6;
constexpr std::size_t kAttn = 5;

struct DecRig {
  ParameterStore store;
  MultiAttentionParams comb;
  DecoderParams dec;
  DecRig(DecoderKind kind, CombinationConfig c, std::uint64_t seed, std::size_t n_enc = 1) {
    SeededRng rng(seed);
    comb = MultiAttentionParams::create(store, "comb", c, kState, kEmbed, std::vector<std::size_t>(n_enc, kEnc), kAttn,
                                        rng);
    dec = DecoderParams::create(store, "dec", kind, kEmbed, comb.context_dim(), kState, rng);
    randomize(store, seed + 5);
  }
};

CombinationConfig concat_cfg() { return {Strategy::Concat, false, false, 0}; }

std::vector<Vec> run_steps(Graph& g, const DecRig& rig, const Tensor& h, const std::vector<Tensor>& ys) {
  Combiner comb(g, rig.comb, {make_encoder_states(g, g.constant(h), 0)});
  const CombineFn fn = [&](NodeId q, std::optional<SentinelInputs> s) { return comb.step(q, s); };
  NodeId s = g.constant(Tensor(Shape{kState}));
  std::vector<Vec> out;
  for (const auto& y : ys) {
    s = decoder_step(g, g.constant(y), s, fn, rig.dec, false).state;
    out.push_back(vec_of(g.value(s)));
  }
  return out;
}

}  // namespace

TEST(DecoderStep, ZeroEverythingGivesZeroState) {
  for (DecoderKind kind : {DecoderKind::Gru, DecoderKind::ConditionalGru}) {
    DecRig rig(kind, concat_cfg(), 14);
    for (ParamId id = 0; id < rig.store.size(); ++id) rig.store.value(id).fill(0.0);
    Graph g(&rig.store);
    const auto states = run_steps(g, rig, Tensor(Shape{3, kEnc}), {Tensor(Shape{kEmbed})});
    EXPECT_EQ(states[0], Vec(kState, 0.0));
  }
}

TEST(DecoderStep, ThreeStepTraceMatchesStraightLineOracle) {
  SeededRng rng(15);
  for (DecoderKind kind : {DecoderKind::Gru, DecoderKind::ConditionalGru}) {
    DecRig rig(kind, concat_cfg(), 16);
    const Tensor h = random_tensor(rng, {4, kEnc});
    const std::vector<Tensor> ys{random_tensor(rng, {kEmbed}), random_tensor(rng, {kEmbed}),
                                 random_tensor(rng, {kEmbed})};
    Graph g(&rig.store);
    const auto got = run_steps(g, rig, h, ys);

    const AttentionParams& a = rig.comb.independent[0];
    Vec s(kState, 0.0);
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (kind == DecoderKind::Gru) {
        // Textbook attentive GRU: attend with s_{i-1}, feed [y; c].
        const Vec c = oracle_context(rig.store, a, s, h);
        s = oracle_gru(rig.store, rig.dec.first, concat(vec_of(ys[i]), c), s);
      } else {
        const Vec mid = oracle_gru(rig.store, rig.dec.first, vec_of(ys[i]), s);
        s = oracle_gru(rig.store, *rig.dec.second, oracle_context(rig.store, a, mid, h), mid);
      }
      EXPECT_LT(max_abs_diff(got[i], s), 1e-12) << decoder_name(kind) << " step " << i;
    }
  }
}

TEST(DecoderStep, ConditionalGruQueriesWithIntermediateState) {
  DecRig rig(DecoderKind::ConditionalGru, concat_cfg(), 17);
  rig.store.value(rig.dec.second->b_z).fill(-800.0);  // second transition keeps its input state
  SeededRng rng(18);
  Graph g(&rig.store);
  Combiner comb(g, rig.comb, {make_encoder_states(g, g.constant(random_tensor(rng, {3, kEnc})), 0)});
  const CombineFn fn = [&](NodeId q, std::optional<SentinelInputs> s) { return comb.step(q, s); };
  const auto step = decoder_step_cgru(g, g.constant(random_tensor(rng, {kEmbed})),
                                      g.constant(random_tensor(rng, {kState}, 0.9)), fn, rig.dec, false);
  EXPECT_LT(max_abs_diff(g.value(step.state), g.value(step.query)), 1e-6);
}

TEST(DecoderStep, KindMismatchIsAnError) {
  DecRig plain(DecoderKind::Gru, concat_cfg(), 19);
  DecRig cond(DecoderKind::ConditionalGru, concat_cfg(), 19);
  Graph g(&plain.store);
  const CombineFn never = [](NodeId, std::optional<SentinelInputs>) -> CombinedOutput { throw std::logic_error("x"); };
  const NodeId y = g.constant(Tensor(Shape{kEmbed}));
  const NodeId s = g.constant(Tensor(Shape{kState}));
  EXPECT_THROW(decoder_step_cgru(g, y, s, never, plain.dec, false), ConfigError);
  EXPECT_THROW(decoder_step_plain(g, y, s, never, cond.dec, false), ConfigError);
  EXPECT_EQ(parse_decoder("gru"), DecoderKind::Gru);
  EXPECT_EQ(parse_decoder("cgru"), DecoderKind::ConditionalGru);
  EXPECT_THROW(parse_decoder("lstm"), ConfigError);
}

TEST(DecoderStep, GradientsThroughBothKindsPassFiniteDifferences) {
  for (DecoderKind kind : {DecoderKind::Gru, DecoderKind::ConditionalGru}) {
    for (bool sentinel : {false, true}) {
      DecRig rig(kind, {Strategy::Hierarchical, false, sentinel, 0}, 20, 2);
      SeededRng rng(21);
      const Tensor h0 = random_tensor(rng, {3, kEnc});
      const Tensor h1 = random_tensor(rng, {2, kEnc});
      const Tensor y0 = random_tensor(rng, {kEmbed});
      const Tensor y1 = random_tensor(rng, {kEmbed});
      const Tensor w = random_tensor(rng, {kState});
      const auto r = finite_difference_check(rig.store, [&](Graph& g) {
        Combiner comb(g, rig.comb,
                      {make_encoder_states(g, g.constant(h0), 0), make_encoder_states(g, g.constant(h1), 1)});
        const CombineFn fn = [&](NodeId q, std::optional<SentinelInputs> s) { return comb.step(q, s); };
        NodeId s = g.constant(Tensor(Shape{kState}));
        s = decoder_step(g, g.constant(y0), s, fn, rig.dec, sentinel).state;
        s = decoder_step(g, g.constant(y1), s, fn, rig.dec, sentinel).state;
        return g.sum(g.mul(s, g.constant(w)));
      });
      EXPECT_LT(r.max_rel_error, 1e-4) << decoder_name(kind) << " sentinel=" << sentinel << " " << r.worst_param;
    }
  }
}
