#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>
#include <numbers>

#include "multiattn/adam.hpp"
#include "multiattn/errors.hpp"
#include "multiattn/gradcheck.hpp"
#include "multiattn/graph.hpp"
#include "multiattn/init.hpp"
#include "multiattn/rng.hpp"
#include "test_support.hpp"

using namespace multiattn;
using namespace multiattn::testing;

// --- Tensor -----------------------------------------------------------------

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
  const Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 6.0);
}

TEST(Tensor, NonFiniteValuesAreReported) {
  Tensor t = Tensor::vector({1.0, std::nan("")});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.check_finite("probe"), NumericError);
  Graph g;
  EXPECT_THROW(g.constant(Tensor::vector({std::numeric_limits<double>::infinity()})), NumericError);
}

// --- RNG ----------------------------------------------------------------------

TEST(SeededRng, MatchesReferenceSplitMix64Stream) {
  // Reference outputs of SplitMix64 computed with an independent
  // arbitrary-precision implementation.
  SeededRng zero(0);
  EXPECT_EQ(zero.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(zero.next(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(zero.next(), 0x06c45d188009454fULL);
  SeededRng r42(42);
  EXPECT_EQ(r42.next(), 13679457532755275413ULL);
  EXPECT_EQ(r42.next(), 2949826092126892291ULL);
  EXPECT_EQ(r42.next(), 5139283748462763858ULL);
}

TEST(SeededRng, EqualSeedsGiveEqualStreams) {
  SeededRng a(99), b(99);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next(), b.next());
  SeededRng c(99);
  c.next();
  SeededRng d(100);
  EXPECT_NE(SeededRng(99).next(), d.next());
}

TEST(SeededRng, RangesAreRespected) {
  SeededRng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
    const auto b = rng.between(-3, 3);
    ASSERT_GE(b, -3);
    ASSERT_LE(b, 3);
  }
}

TEST(SeededRng, ShuffleIsAPermutationAndDeterministic) {
  std::vector<int> a(50), b(50);
  for (int i = 0; i < 50; ++i) a[i] = b[i] = i;
  SeededRng r1(8), r2(8);
  r1.shuffle(a);
  r2.shuffle(b);
  EXPECT_EQ(a, b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Init, GlorotBoundsAndZeroBiases) {
  ParameterStore store;
  SeededRng rng(1);
  const auto w = add_weight(store, "w", 10, 6, rng);
  const auto b = add_bias(store, "b", 10);
  const double r = std::sqrt(6.0 / 16.0);
  for (double x : store.value(w).data()) {
    EXPECT_LE(std::abs(x), r);
  }
  for (double x : store.value(b).data()) EXPECT_EQ(x, 0.0);

  ParameterStore again;
  SeededRng rng2(1);
  add_weight(again, "w", 10, 6, rng2);
  EXPECT_EQ(store.value(w), again.value("w"));
}

// --- softmax --------------------------------------------------------------------

TEST(Softmax, ClosedFormValues) {
  const Tensor half = softmax(Tensor::vector({0.0, 0.0}));
  EXPECT_DOUBLE_EQ(half[0], 0.5);
  EXPECT_DOUBLE_EQ(half[1], 0.5);
  for (double c : {-700.0, 0.0, 3.5, 800.0}) {
    const Tensor t = softmax(Tensor::vector({c, c, c}));
    for (double x : t.data()) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
  }
  const Tensor p = softmax(Tensor::vector({std::numbers::ln2, 0.0}));
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RejectsNonFiniteInput) {
  EXPECT_THROW(softmax(Tensor::vector({1.0, std::numeric_limits<double>::infinity()})), NumericError);
}

TEST(Softmax, PropertyNormalizedAndShiftInvariant) {
  SeededRng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    Tensor v = random_tensor(rng, {n}, 30.0);
    const Tensor p = softmax(v);
    double s = 0.0;
    for (double x : p.data()) {
      ASSERT_GE(x, 0.0);
      s += x;
    }
    ASSERT_NEAR(s, 1.0, 1e-12);
    const double shift = rng.uniform(-100.0, 100.0);
    for (double& x : v.data()) x += shift;
    ASSERT_LT(max_abs_diff(p, softmax(v)), 1e-12);
  }
}

// --- forward ops ------------------------------------------------------------------

TEST(GraphOps, ForwardExamples) {
  Graph g;
  const NodeId x = g.constant(Tensor::vector({1.5, -2.0, 0.25}));
  const NodeId eye = g.constant(Tensor::identity(3));
  EXPECT_EQ(g.value(g.matmul(eye, x)), g.value(x));
  const NodeId zero = g.constant(Tensor::scalar(0.0));
  EXPECT_EQ(g.value(g.tanh(zero)).item(), 0.0);
  EXPECT_EQ(g.value(g.sigmoid(zero)).item(), 0.5);
  for (std::size_t v : {2u, 7u, 50u}) {
    const NodeId uniform = g.constant(Tensor::filled({v}, 1.0 / static_cast<double>(v)));
    EXPECT_NEAR(g.value(g.cross_entropy(uniform, v - 1)).item(), std::log(static_cast<double>(v)), 1e-12);
  }
  const std::array parts{x, x};
  EXPECT_EQ(g.value(g.concat_rows(parts)).size(), 6u);
  const NodeId m = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(g.value(g.embedding_lookup(m, 1)), Tensor::vector({4, 5, 6}));
  EXPECT_EQ(g.value(g.mul(x, x)), Tensor::vector({2.25, 4.0, 0.0625}));
  EXPECT_EQ(g.value(g.add(x, x)), Tensor::vector({3.0, -4.0, 0.5}));
}

TEST(GraphOps, SigmoidIsStableAtExtremes) {
  Graph g;
  const NodeId big = g.constant(Tensor::vector({-800.0, 800.0}));
  const Tensor s = g.value(g.sigmoid(big));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
}

TEST(GraphOps, ShapeMismatchNamesOpAndShapes) {
  Graph g;
  const NodeId a = g.constant(Tensor(Shape{3}));
  const NodeId b = g.constant(Tensor(Shape{4}));
  try {
    g.add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4]"), std::string::npos) << msg;
  }
  const NodeId m = g.constant(Tensor(Shape{2, 3}));
  EXPECT_THROW(g.matmul(m, b), ShapeError);
}

TEST(GraphOps, UnknownNodeIdsAreRejected) {
  Graph g;
  const NodeId a = g.constant(Tensor::scalar(1.0));
  EXPECT_THROW(g.add(a, a + 5), GraphError);
}

// --- backward ----------------------------------------------------------------------

TEST(Backward, QuadraticGradient) {
  ParameterStore store;
  const auto x = store.add("x", Tensor::scalar(3.0));
  Graph g(&store);
  const NodeId px = g.parameter(x);
  const Gradients grads = g.backward(g.mul(px, px));
  EXPECT_DOUBLE_EQ(grads[x].item(), 6.0);
}

TEST(Backward, SoftmaxCrossEntropyAdjoint) {
  SeededRng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore store;
    const std::size_t n = 2 + rng.below(8);
    const auto z = store.add("z", random_tensor(rng, {n}, 3.0));
    const std::size_t label = rng.below(n);
    for (bool fused : {false, true}) {
      Graph g(&store);
      const NodeId pz = g.parameter(z);
      const NodeId loss = fused ? g.softmax_cross_entropy(pz, label) : g.cross_entropy(g.softmax(pz), label);
      const Gradients grads = g.backward(loss);
      Tensor expected = softmax(store.value(z));
      expected[label] -= 1.0;
      EXPECT_LT(max_abs_diff(grads[z], expected), 1e-12);
    }
  }
}

TEST(Backward, UnreachedParametersGetZeroGradients) {
  ParameterStore store;
  const auto used = store.add("used", Tensor::vector({1.0, 2.0}));
  const auto unused = store.add("unused", Tensor::vector({5.0, 6.0}));
  Graph g(&store);
  g.parameter(unused);
  const Gradients grads = g.backward(g.sum(g.parameter(used)));
  EXPECT_EQ(grads[used], Tensor::vector({1.0, 1.0}));
  EXPECT_EQ(grads[unused], Tensor::vector({0.0, 0.0}));
}

TEST(Backward, RejectsNonScalarLoss) {
  ParameterStore store;
  const auto x = store.add("x", Tensor::vector({1.0, 2.0}));
  Graph g(&store);
  EXPECT_THROW(g.backward(g.parameter(x)), GraphError);
}

TEST(Backward, SharedSubexpressionsAccumulate) {
  ParameterStore store;
  const auto x = store.add("x", Tensor::vector({0.3, -0.7}));
  Graph g(&store);
  const NodeId t = g.tanh(g.parameter(x));
  const std::array terms{t, t, t};
  const Gradients grads = g.backward(g.sum(g.add_n(terms)));
  for (std::size_t i = 0; i < 2; ++i) {
    const double th = std::tanh(store.value(x)[i]);
    EXPECT_NEAR(grads[x][i], 3.0 * (1.0 - th * th), 1e-15);
  }
}

// --- finite differences -------------------------------------------------------------

TEST(FiniteDifference, CubicAtTwo) {
  ParameterStore store;
  store.add("x", Tensor::scalar(2.0));
  const auto r = finite_difference_check(store, [](Graph& g) {
    const NodeId x = g.parameter(std::string_view("x"));
    return g.mul(g.mul(x, x), x);
  });
  ASSERT_EQ(r.per_param.size(), 1u);
  EXPECT_NEAR(r.numeric, 12.0, 12.0 * 1e-6);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(FiniteDifference, ConstantFunctionHasZeroGradients) {
  ParameterStore store;
  store.add("x", Tensor::vector({1.0, 2.0, 3.0}));
  const auto r = finite_difference_check(store, [](Graph& g) {
    g.parameter(std::string_view("x"));
    return g.constant(Tensor::scalar(4.0));
  });
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.analytic, 0.0);
  EXPECT_EQ(r.numeric, 0.0);
}

TEST(FiniteDifference, DetectsNonDeterministicLoss) {
  ParameterStore store;
  store.add("x", Tensor::scalar(1.0));
  int calls = 0;
  EXPECT_THROW(finite_difference_check(store,
                                       [&](Graph& g) {
                                         const NodeId x = g.parameter(std::string_view("x"));
                                         return g.scale(x, 1.0 + 0.01 * ++calls);
                                       }),
               NumericError);
}

TEST(FiniteDifference, RestoresParametersExactly) {
  SeededRng rng(2);
  ParameterStore store;
  store.add("w", random_tensor(rng, {3, 3}));
  const Tensor before = store.value("w");
  finite_difference_check(store, [](Graph& g) { return g.sum(g.tanh(g.parameter(std::string_view("w")))); });
  EXPECT_EQ(store.value("w"), before);
}

// Every differentiable op gets a random-input gradient check, and a
// corrupted adjoint for that op must be caught by the same check.
namespace {

struct OpFixture {
  ParameterStore store;
  std::map<OpKind, std::function<NodeId(Graph&)>> builders;
};

NodeId p(Graph& g, const char* name) { return g.parameter(std::string_view(name)); }

void build_fixture(OpFixture& f) {
  SeededRng rng(1234);
  f.store.add("a", random_tensor(rng, {3, 4}));
  f.store.add("c", random_tensor(rng, {2, 4}));
  f.store.add("bm", random_tensor(rng, {4, 2}));
  f.store.add("x", random_tensor(rng, {4}));
  f.store.add("u", random_tensor(rng, {4}));
  f.store.add("y", random_tensor(rng, {3}));
  f.store.add("b2", random_tensor(rng, {2}));
  f.store.add("b3", random_tensor(rng, {3}));
  f.store.add("s", random_tensor(rng, {1}));
  f.store.add("probs_logits", random_tensor(rng, {5}));

  auto& b = f.builders;
  b[OpKind::MatMul] = [](Graph& g) {
    // Matrix-vector and matrix-matrix forms.
    return g.concat_rows(std::array{g.matmul(p(g, "a"), p(g, "x")), g.row(g.matmul(p(g, "a"), p(g, "bm")), 1)});
  };
  b[OpKind::MatMulTN] = [](Graph& g) { return g.matmul_tn(p(g, "a"), p(g, "y")); };
  b[OpKind::MatMulNT] = [](Graph& g) { return g.matmul_nt(p(g, "a"), p(g, "c")); };
  b[OpKind::Affine] = [](Graph& g) { return g.affine(p(g, "a"), p(g, "x"), p(g, "b3")); };
  b[OpKind::AffineRows] = [](Graph& g) { return g.affine_rows(p(g, "a"), p(g, "c"), p(g, "b2")); };
  b[OpKind::Add] = [](Graph& g) { return g.add(p(g, "x"), p(g, "u")); };
  b[OpKind::AddRow] = [](Graph& g) { return g.add_row(p(g, "a"), p(g, "x")); };
  b[OpKind::Sub] = [](Graph& g) { return g.sub(p(g, "x"), p(g, "u")); };
  b[OpKind::Mul] = [](Graph& g) { return g.mul(p(g, "x"), p(g, "u")); };
  b[OpKind::Scale] = [](Graph& g) { return g.scale(p(g, "x"), -1.7); };
  b[OpKind::ScaleBy] = [](Graph& g) { return g.scale_by(p(g, "x"), p(g, "s")); };
  b[OpKind::Tanh] = [](Graph& g) { return g.tanh(p(g, "a")); };
  b[OpKind::Sigmoid] = [](Graph& g) { return g.sigmoid(p(g, "a")); };
  b[OpKind::ConcatRows] = [](Graph& g) {
    const NodeId v = g.concat_rows(std::array{p(g, "x"), p(g, "y"), p(g, "s")});
    const NodeId m = g.concat_rows(std::array{p(g, "a"), p(g, "c")});
    return g.concat_rows(std::array{v, g.row(m, 4)});
  };
  b[OpKind::StackRows] = [](Graph& g) { return g.stack_rows(std::array{p(g, "x"), p(g, "u"), p(g, "x")}); };
  b[OpKind::Row] = [](Graph& g) { return g.row(p(g, "a"), 1); };
  b[OpKind::Slice] = [](Graph& g) { return g.slice(p(g, "x"), 1, 2); };
  b[OpKind::Element] = [](Graph& g) { return g.element(p(g, "x"), 2); };
  b[OpKind::Embedding] = [](Graph& g) { return g.embedding_lookup(p(g, "a"), 2); };
  b[OpKind::EmbeddingRows] = [](Graph& g) {
    const std::array<std::size_t, 3> ids{2, 0, 2};
    return g.embedding_rows(p(g, "a"), ids);
  };
  b[OpKind::Sum] = [](Graph& g) { return g.sum(p(g, "a")); };
  b[OpKind::AddN] = [](Graph& g) { return g.add_n(std::array{p(g, "x"), p(g, "u"), p(g, "x")}); };
  b[OpKind::Softmax] = [](Graph& g) { return g.softmax(p(g, "probs_logits")); };
  b[OpKind::CrossEntropy] = [](Graph& g) { return g.cross_entropy(g.softmax(p(g, "probs_logits")), 3); };
  b[OpKind::SoftmaxCrossEntropy] = [](Graph& g) { return g.softmax_cross_entropy(p(g, "probs_logits"), 1); };
}

/// Reduces an op output to a scalar through a fixed random weighting, so
/// every output coordinate contributes a distinct amount to the loss.
NodeId weighted_total(Graph& g, NodeId out) {
  SeededRng rng(77);
  const NodeId w = g.constant(random_tensor(rng, g.shape(out)));
  return g.sum(g.mul(out, w));
}

}  // namespace

TEST(OpGradients, EveryDifferentiableOpHasACheckedAdjoint) {
  OpFixture f;
  build_fixture(f);
  for (OpKind op : differentiable_ops()) {
    ASSERT_TRUE(f.builders.contains(op)) << "no gradient test for op " << op_name(op);
  }
  for (const auto& [op, build] : f.builders) {
    const auto r = finite_difference_check(f.store, [&](Graph& g) { return weighted_total(g, build(g)); });
    EXPECT_LT(r.max_rel_error, 1e-4) << op_name(op) << " worst " << r.worst_param << "[" << r.worst_index << "]";
  }
}

TEST(OpGradients, CorruptedAdjointIsDetectedForEveryOp) {
  OpFixture f;
  build_fixture(f);
  for (const auto& [op, build] : f.builders) {
    GradCheckOptions opts;
    opts.fault = AdjointFault{op, 1.5};
    const auto r = finite_difference_check(f.store, [&](Graph& g) { return weighted_total(g, build(g)); }, opts);
    EXPECT_GT(r.max_rel_error, 1e-4) << "fault in " << op_name(op) << " went unnoticed";
  }
}

TEST(OpNames, RoundTrip) {
  for (OpKind op : differentiable_ops()) {
    const auto back = op_from_name(op_name(op));
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, op);
  }
  EXPECT_FALSE(op_from_name("no_such_op").has_value());
}

// --- Adam -----------------------------------------------------------------------------

TEST(Adam, FirstStepMovesEachCoordinateByAboutLr) {
  ParameterStore store;
  const auto w = store.add("w", Tensor::vector({0.5, -1.0, 2.0, 0.0}));
  Gradients grads(store);
  grads[w] = Tensor::vector({0.3, -4.0, 1e-3, 25.0});
  AdamState state(store);
  AdamConfig cfg;
  cfg.lr = 1e-2;
  const Tensor before = store.value(w);
  adam_step(store, grads, state, cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    const double g = grads[w][i];
    // m_hat = g, v_hat = g^2 on the first step.
    const double expected = cfg.lr * g / (std::abs(g) + cfg.eps);
    EXPECT_NEAR(before[i] - store.value(w)[i], expected, 1e-15);
    EXPECT_NEAR(std::abs(before[i] - store.value(w)[i]), cfg.lr, 1e-7);
  }
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterStore store;
  const auto w = store.add("w", Tensor::vector({0.5, -1.0}));
  Gradients grads(store);
  AdamState state(store);
  for (int i = 0; i < 5; ++i) adam_step(store, grads, state, AdamConfig{});
  EXPECT_EQ(store.value(w), Tensor::vector({0.5, -1.0}));
}

TEST(Adam, ConvergesOnSquare) {
  ParameterStore store;
  const auto x = store.add("x", Tensor::scalar(1.0));
  AdamState state(store);
  AdamConfig cfg;
  cfg.lr = 0.1;
  for (int i = 0; i < 100; ++i) {
    Graph g(&store);
    const NodeId px = g.parameter(x);
    adam_step(store, g.backward(g.mul(px, px)), state, cfg);
  }
  EXPECT_LT(std::abs(store.value(x).item()), 0.01);
}

TEST(Adam, ShapeMismatchIsAnError) {
  ParameterStore store;
  const auto w = store.add("w", Tensor::vector({0.5, -1.0}));
  Gradients grads(store);
  grads[w] = Tensor::vector({1.0, 2.0, 3.0});
  AdamState state(store);
  EXPECT_THROW(adam_step(store, grads, state, AdamConfig{}), ShapeError);
}
