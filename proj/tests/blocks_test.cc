// tests/blocks_test.cc

// Copyright 2026  The dsq Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include <gtest/gtest.h>

#include "dsq/blocks.hpp"
#include "dsq/gradcheck.hpp"

namespace dsq {
namespace {

Tensor<double> Random(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<double> t(shape);
  for (auto &v : t.data) v = scale * rng.Normal();
  return t;
}

Expr<double> Project(Graph<double> &g, Expr<double> y, std::uint64_t seed = 77) {
  return Sum(Mul(y, g.Constant(Random(y.shape(), seed))));
}

BlockConfig SmallBlock() {
  BlockConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ffn = 12;
  c.dropout = 0.0;
  return c;
}

void ExpectParamsOk(const std::function<Expr<double>(Graph<double> &)> &loss, ParameterSet<double> &ps) {
  const GradCheckReport r = GradCheckParams<double>(loss, ps);
  EXPECT_TRUE(r.passed) << "max rel error " << r.max_rel_error << " at " << r.worst;
  EXPECT_EQ(r.checked, ps.NumScalars());
}

void ExpectInputOk(const std::function<Expr<double>(Graph<double> &, Expr<double>)> &f, const Tensor<double> &x) {
  const GradCheckReport r = GradCheck<double>(f, x);
  EXPECT_TRUE(r.passed) << "max rel error " << r.max_rel_error << " at " << r.worst;
}

TEST(BlockConfig, Validation) {
  BlockConfig c = SmallBlock();
  EXPECT_NO_THROW(c.Validate());
  c.n_heads = 3;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = SmallBlock();
  c.dropout = 1.0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

TEST(PositionalEncoding, SinusoidValues) {
  Tensor<double> pe = PositionalEncoding<double>(3, 4);
  EXPECT_DOUBLE_EQ(pe(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe(0, 1), 1.0);
  EXPECT_NEAR(pe(1, 0), 0.84147098, 1e-8);
  EXPECT_NEAR(pe(1, 1), 0.54030231, 1e-8);
  EXPECT_NEAR(pe(1, 2), std::sin(1.0 / 100.0), 1e-12);
  // An offset start reproduces the corresponding rows.
  Tensor<double> tail = PositionalEncoding<double>(1, 4, 2);
  EXPECT_EQ(RowOf(pe, 2), tail);
}

TEST(MultiHeadAttention, GradientsAndMaskedWeights) {
  ParameterSet<double> ps;
  Rng rng(1);
  auto mha = MultiHeadAttention<double>::Create(ps, "mha", SmallBlock(), rng);
  const Tensor<double> q = Random({3, 8}, 2), kv = Random({4, 8}, 3);
  AttentionMask mask(3, 4);
  mask.set(0, 3, false);
  mask.set(1, 0, false);
  ExpectParamsOk([&](Graph<double> &g) { return Project(g, mha(g, g.Constant(q), g.Constant(kv), g.Constant(kv), &mask)); }, ps);
  ExpectInputOk([&](Graph<double> &g, Expr<double> x) { return Project(g, mha(g, x, g.Constant(kv), g.Constant(kv), &mask)); }, q);
  ExpectInputOk([&](Graph<double> &g, Expr<double> x) { return Project(g, mha(g, g.Constant(q), x, x, &mask)); }, kv);

  Graph<double> g;
  std::vector<Tensor<double>> weights;
  mha(g, g.Constant(q), g.Constant(kv), g.Constant(kv), &mask, &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (const auto &w : weights) {
    EXPECT_EQ(w(0, 3), 0.0);
    EXPECT_EQ(w(1, 0), 0.0);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) s += w(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(FfnAndLayerNorm, Gradients) {
  ParameterSet<double> ps;
  Rng rng(4);
  auto ffn = PositionwiseFfn<double>::Create(ps, "ffn", SmallBlock(), rng);
  auto ln = LayerNorm<double>::Create(ps, "ln", 8);
  ps.Get("ln.gain").value = Random({1, 8}, 5);
  ps.Get("ln.bias").value = Random({1, 8}, 6);
  const Tensor<double> x = Random({3, 8}, 7);
  ExpectParamsOk([&](Graph<double> &g) { return Project(g, ln(g, ffn(g, g.Constant(x)))); }, ps);
  ExpectInputOk([&](Graph<double> &g, Expr<double> v) { return Project(g, ln(g, ffn(g, v))); }, x);
}

TEST(LayerNorm, NormalisesRows) {
  ParameterSet<double> ps;
  auto ln = LayerNorm<double>::Create(ps, "ln", 6);
  Graph<double> g;
  Tensor<double> y = ln(g, g.Constant(Random({2, 6}, 8, 5.0))).value();
  for (std::size_t r = 0; r < 2; ++r) {
    double mu = 0, var = 0;
    for (double v : y.row(r)) mu += v / 6;
    for (double v : y.row(r)) var += (v - mu) * (v - mu) / 6;
    EXPECT_NEAR(mu, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(AttentionPooling, WeightsFormADistribution) {
  ParameterSet<double> ps;
  Rng rng(9);
  auto pool = AttentionPooling<double>::Create(ps, "pool", 8, rng);
  const Tensor<double> c = Random({5, 8}, 10);
  Graph<double> g;
  Tensor<double> w;
  Tensor<double> out = pool(g, g.Constant(c), &w).value();
  ASSERT_EQ(w.shape, (Shape{1, 5}));
  double s = 0;
  for (double v : w.data) {
    EXPECT_GE(v, 0.0);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  // Output is the weighted average of the rows.
  for (std::size_t j = 0; j < 8; ++j) {
    double e = 0;
    for (std::size_t n = 0; n < 5; ++n) e += w.data[n] * c(n, j);
    EXPECT_NEAR(out(0, j), e, 1e-12);
  }
  // One vector pools to itself.
  EXPECT_LT(MaxAbsDiff(pool(g, g.Constant(RowOf(c, 2))).value(), RowOf(c, 2)), 1e-15);
  ExpectParamsOk([&](Graph<double> &gg) { return Project(gg, pool(gg, gg.Constant(c))); }, ps);
  ExpectInputOk([&](Graph<double> &gg, Expr<double> x) { return Project(gg, pool(gg, x)); }, c);
}

TEST(ConvolutionPooling, ShapesAndErrors) {
  ParameterSet<double> ps;
  Rng rng(11);
  auto conv = ConvolutionPooling<double>::Create(ps, "conv", 6, 2, 3, 8, rng);
  Graph<double> g;
  for (std::size_t m : {4u, 5u, 7u, 8u, 9u}) {
    Expr<double> y = conv(g, g.Constant(Random({m, 6}, m)));
    EXPECT_EQ(y.rows(), SubsampledLength(m));
    EXPECT_EQ(y.rows(), static_cast<std::size_t>(std::ceil(std::ceil(m / 2.0) / 2.0)));
    EXPECT_EQ(y.cols(), 8u);
  }
  EXPECT_THROW(conv(g, g.Constant(Random({3, 6}, 1))), std::invalid_argument);
  EXPECT_THROW(conv(g, g.Constant(Random({8, 5}, 1))), DimensionError);
}

TEST(ConvolutionPooling, Gradients) {
  ParameterSet<double> ps;
  Rng rng(12);
  auto conv = ConvolutionPooling<double>::Create(ps, "conv", 4, 2, 2, 8, rng);
  const Tensor<double> x = Random({5, 4}, 13);
  ExpectParamsOk([&](Graph<double> &g) { return Project(g, conv(g, g.Constant(x))); }, ps);
  ExpectInputOk([&](Graph<double> &g, Expr<double> v) { return Project(g, conv(g, v)); }, x);
}

TEST(EncoderBlock, GradientsAndCausality) {
  ParameterSet<double> ps;
  Rng rng(14);
  auto block = EncoderBlock<double>::Create(ps, "enc", SmallBlock(), rng);
  const Tensor<double> x = Random({4, 8}, 15);
  ExpectParamsOk([&](Graph<double> &g) { return Project(g, block.Masked(g, g.Constant(x))); }, ps);
  ExpectInputOk([&](Graph<double> &g, Expr<double> v) { return Project(g, block(g, v)); }, x);

  Graph<double> g;
  Tensor<double> y = block.Masked(g, g.Constant(x)).value();
  Tensor<double> x2 = x;
  for (std::size_t j = 0; j < 8; ++j) x2(3, j) += 5.0;
  Tensor<double> y2 = block.Masked(g, g.Constant(x2)).value();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(y(r, j), y2(r, j));
}

TEST(DecoderBlock, GradientsWithAndWithoutSpeech) {
  for (bool speech : {true, false}) {
    ParameterSet<double> ps;
    Rng rng(16);
    auto block = DecoderBlock<double>::Create(ps, "dec", SmallBlock(), speech, rng);
    EXPECT_EQ(block.has_speech(), speech);
    const Tensor<double> x = Random({3, 8}, 17), h = Random({5, 8}, 18), z = Random({2, 8}, 19);
    auto run = [&](Graph<double> &g, Expr<double> xx) {
      std::optional<Expr<double>> sp;
      if (speech) sp = g.Constant(h);
      return Project(g, block(g, xx, sp, g.Constant(z)));
    };
    ExpectParamsOk([&](Graph<double> &g) { return run(g, g.Constant(x)); }, ps);
    ExpectInputOk(run, x);
  }
}

TEST(DecoderBlock, StepMatchesFullSequence) {
  ParameterSet<double> ps;
  Rng rng(20);
  auto block = DecoderBlock<double>::Create(ps, "dec", SmallBlock(), true, rng);
  const Tensor<double> x = Random({4, 8}, 21), h = Random({5, 8}, 22), z = Random({3, 8}, 23);
  Graph<double> g;
  Tensor<double> full = block(g, g.Constant(x), g.Constant(h), g.Constant(z)).value();
  const ProjectedMemory<double> sp = block.ProjectSpeech(g, g.Constant(h));
  const ProjectedMemory<double> cp = block.ProjectContext(g, g.Constant(z));
  Tensor<double> keys, values;
  for (std::size_t n = 0; n < 4; ++n) {
    Graph<double> gs;
    Tensor<double> row = block.Step(gs, gs.Constant(RowOf(x, n)), keys, values, &sp, cp).value();
    EXPECT_LE(MaxAbsDiff(row, RowOf(full, n)), 1e-10);
  }
  EXPECT_EQ(keys.rows(), 4u);
}

TEST(DecoderBlock, MissingSpeechMemoryIsAnError) {
  ParameterSet<double> ps;
  Rng rng(24);
  auto block = DecoderBlock<double>::Create(ps, "dec", SmallBlock(), true, rng);
  Graph<double> g;
  EXPECT_THROW(block(g, g.Constant(Random({2, 8}, 1)), std::nullopt, g.Constant(Random({1, 8}, 2))),
               std::invalid_argument);
}

}  // namespace
}  // namespace dsq
