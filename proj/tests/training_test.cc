// tests/training_test.cc

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

#include "dsq/gradcheck.hpp"
#include "dsq/pipeline.hpp"
#include "dsq/training.hpp"

namespace dsq {
namespace {

Tensor<double> RandomDistributions(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += (t(r, c) = rng.Uniform() + 1e-3);
    for (std::size_t c = 0; c < cols; ++c) t(r, c) /= s;
  }
  return t;
}

void ExpectRowsSumToOne(const Tensor<double> &t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double s = 0;
    for (double v : t.row(r)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

// ---------------------------------------------------------------- losses

TEST(NllLoss, MatchesDoubleLoopOracle) {
  const Tensor<double> p = RandomDistributions(6, 9, 1), q = RandomDistributions(6, 9, 2);
  double oracle = 0;
  for (std::size_t n = 0; n < 6; ++n)
    for (std::size_t v = 0; v < 9; ++v) oracle -= q(n, v) * std::log(p(n, v));
  EXPECT_NEAR(NllLoss(p, q), oracle, 1e-10);
  Tensor<double> logp = p;
  for (auto &v : logp.data) v = std::log(v);
  Graph<double> g;
  EXPECT_NEAR(SoftTargetNll(g.Constant(logp), q).value().data[0], oracle, 1e-10);
  EXPECT_THROW(NllLoss(p, RandomDistributions(6, 8, 3)), DimensionError);
}

TEST(NllLoss, PerfectAndUniformModels) {
  const std::vector<int> tokens = {4, 5, 2, 6};
  const Tensor<double> onehot = OneHotTargets<double>(tokens, 8);
  EXPECT_EQ(NllLoss(onehot, onehot), 0.0);
  const Tensor<double> uniform({4, 8}, 1.0 / 8);
  EXPECT_NEAR(NllLoss(uniform, onehot), 4 * std::log(8.0), 1e-12);
  // Zero probabilities are clamped rather than producing infinity.
  Tensor<double> wrong({4, 8});
  for (std::size_t n = 0; n < 4; ++n) wrong(n, 1) = 1.0;
  EXPECT_NEAR(NllLoss(wrong, onehot), -4 * std::log(1e-12), 1e-9);
}

TEST(NllLoss, PadPositionsAreExcluded) {
  const Tensor<double> onehot = OneHotTargets<double>({4, Vocabulary::kPad, 5}, 7);
  for (double v : onehot.row(1)) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(NllLoss(Tensor<double>({3, 7}, 1.0 / 7), onehot), 2 * std::log(7.0), 1e-12);
}

// ---------------------------------------------------------------- smoothing

TEST(SmoothTargets, KdEndpointsAndWorkedExample) {
  const Tensor<double> onehot = OneHotTargets<double>({4, 6, 2}, 8);
  const Tensor<double> teacher = RandomDistributions(3, 8, 4);
  EXPECT_EQ(SmoothTargetsKd(onehot, teacher, 0.0), onehot);
  const Tensor<double> all_teacher = SmoothTargetsKd(onehot, teacher, 1.0);
  for (std::size_t i = 0; i < teacher.size(); ++i) EXPECT_NEAR(all_teacher.data[i], teacher.data[i], 1e-15);
  const Tensor<double> e2 = Tensor<double>::Matrix(1, 3, {0, 1, 0});
  const Tensor<double> t = Tensor<double>::Matrix(1, 3, {0.2, 0.3, 0.5});
  const Tensor<double> mixed = SmoothTargetsKd(e2, t, 0.5);
  EXPECT_NEAR(mixed.data[0], 0.1, 1e-15);
  EXPECT_NEAR(mixed.data[1], 0.65, 1e-15);
  EXPECT_NEAR(mixed.data[2], 0.25, 1e-15);
  EXPECT_THROW(SmoothTargetsKd(onehot, teacher, -0.1), std::invalid_argument);
  EXPECT_THROW(SmoothTargetsKd(onehot, teacher, 1.1), std::invalid_argument);
  EXPECT_THROW(SmoothTargetsKd(onehot, RandomDistributions(2, 8, 5), 0.5), DimensionError);
}

TEST(SmoothTargets, TeacherRowsAreRenormalized) {
  const Tensor<double> onehot = OneHotTargets<double>({4, 6}, 8);
  const Tensor<double> teacher = RandomDistributions(2, 8, 6);
  Tensor<double> scaled = teacher;
  for (auto &v : scaled.data) v *= 3.0;
  const Tensor<double> a = SmoothTargetsKd(onehot, teacher, 0.3), b = SmoothTargetsKd(onehot, scaled, 0.3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-15);
  // A 32-bit teacher row yields targets that sum to 1 in 64-bit.
  const Tensor<double> rounded = teacher.cast<float>().cast<double>();
  ExpectRowsSumToOne(SmoothTargetsKd(onehot, rounded, 0.7));
  Tensor<double> negative = teacher;
  negative(1, 3) = -0.1;
  EXPECT_THROW(SmoothTargetsKd(onehot, negative, 0.5), std::invalid_argument);
  EXPECT_THROW(SmoothTargetsKd(onehot, Tensor<double>({2, 8}), 0.5), std::invalid_argument);
}

TEST(SmoothTargets, LabelSmoothingIsKdWithUniformTeacher) {
  const Tensor<double> onehot = OneHotTargets<double>({4, 6, 2, 3}, 9);
  EXPECT_EQ(SmoothTargetsLabel(onehot, 0.0), onehot);
  for (double eps : {0.05, 0.1, 0.3, 0.9}) {
    const Tensor<double> a = SmoothTargetsLabel(onehot, eps);
    const Tensor<double> b = SmoothTargetsKd(onehot, UniformTargets<double>(4, 9), eps);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-12);
    ExpectRowsSumToOne(a);
    for (std::size_t n = 0; n < 4; ++n) EXPECT_EQ(a(n, Vocabulary::kPad), 0.0);
  }
  EXPECT_THROW(SmoothTargetsLabel(onehot, 1.0), std::invalid_argument);
}

TEST(SmoothTargets, AlwaysDistributions) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<int> tokens;
    for (int n = 0; n < 5; ++n) tokens.push_back(static_cast<int>(rng.UniformInt(1, 10)));
    const Tensor<double> onehot = OneHotTargets<double>(tokens, 11);
    ExpectRowsSumToOne(SmoothTargetsKd(onehot, RandomDistributions(5, 11, seed + 100), rng.Uniform()));
    ExpectRowsSumToOne(SmoothTargetsLabel(onehot, 0.99 * rng.Uniform()));
  }
}

// ---------------------------------------------------------------- SpecAugment

Tensor<double> Ones(std::size_t m, std::size_t f) { return Tensor<double>({m, f}, 1.0); }

TEST(SpecAugment, ZeroWidthsAndDisabledAreIdentity) {
  SpecAugmentConfig cfg;
  cfg.max_freq_width = 0;
  cfg.max_time_width = 0;
  Rng rng(1);
  const Tensor<double> x = RandomDistributions(12, 5, 6);
  EXPECT_EQ(SpecAugment(x, cfg, rng), x);
  SpecAugmentConfig off;
  off.enabled = false;
  EXPECT_EQ(SpecAugment(x, off, rng), x);
}

TEST(SpecAugment, MasksAreFullBandsOfZeros) {
  SpecAugmentConfig cfg;
  cfg.max_freq_width = 3;
  cfg.max_time_width = 4;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Tensor<double> x = RandomDistributions(20, 10, seed + 7);
    const Tensor<double> y = SpecAugment(x, cfg, rng);
    // A zeroed cell lies in a row or column that is zero throughout; every
    // other cell is untouched.
    std::vector<bool> zero_row(20, true), zero_col(10, true);
    for (std::size_t m = 0; m < 20; ++m)
      for (std::size_t j = 0; j < 10; ++j)
        if (y(m, j) != 0.0) zero_row[m] = zero_col[j] = false;
    for (std::size_t m = 0; m < 20; ++m)
      for (std::size_t j = 0; j < 10; ++j) {
        if (zero_row[m] || zero_col[j]) EXPECT_EQ(y(m, j), 0.0);
        else EXPECT_EQ(y(m, j), x(m, j));
      }
  }
}

TEST(SpecAugment, MaskedFractionIsBounded) {
  SpecAugmentConfig cfg;  // full-size widths: 20 bins, 100 frames
  const std::size_t f = 40, m = 300;
  const double bound = (2.0 * 20 * m + 2.0 * 100 * f) / static_cast<double>(f * m);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const Tensor<double> y = SpecAugment(Ones(m, f), cfg, rng);
    std::size_t zeros = 0;
    for (double v : y.data) zeros += v == 0.0;
    worst = std::max(worst, zeros / static_cast<double>(f * m));
  }
  EXPECT_LE(worst, bound);
  EXPECT_GT(worst, 0.0);
  // Widths larger than the matrix are clipped.
  Rng rng(3);
  const Tensor<double> tiny = SpecAugment(Ones(5, 3), cfg, rng);
  EXPECT_EQ(tiny.shape, (Shape{5, 3}));
}

TEST(TrainingConfig, Validation) {
  TrainingConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.alpha = 1.5;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = TrainingConfig{};
  c.label_eps = 1.0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = TrainingConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

// ---------------------------------------------------------------- training

SynthTaskConfig ToyTask() {
  SynthTaskConfig c;
  c.vocab_size = 4;
  c.utterances = 3;
  c.tokens = 3;
  c.n_topics = 2;
  c.n_groups = 1;
  c.feat_dim = 4;
  c.frames_per_token = 2;
  c.noise = 0.1;
  c.n_train = 2;
  c.n_valid = 1;
  c.n_test = 1;
  return c;
}

ModelConfig SmallConfig(std::size_t vocab, std::size_t feat_dim) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.feat_dim = feat_dim;
  c.block.d_model = 8;
  c.block.n_heads = 2;
  c.block.d_ffn = 12;
  c.block.dropout = 0.0;
  c.token_blocks = 1;
  c.utterance_blocks = 1;
  c.speech_blocks = 1;
  c.decoder_blocks = 1;
  c.conv_channels1 = 2;
  c.conv_channels2 = 2;
  return c;
}

struct Toy {
  SyntheticCorpus corpus = GenerateSyntheticCorpus(ToyTask());
  Vocabulary vocab = Vocabulary::Build(AllTexts(corpus.train));
  FeatureStats<double> stats = EstimateStats<double>(corpus.train, false);
  PreparedSplit<double> train = PreparedSplit<double>::Make(corpus.train, vocab, &stats, 50);
  PreparedSplit<double> valid = PreparedSplit<double>::Make(corpus.valid, vocab, &stats, 50);
  ModelConfig model = SmallConfig(vocab.size(), 4);

  TrainingConfig Config() const {
    TrainingConfig cfg;
    cfg.batch_size = 2;  // the whole toy corpus in one step
    cfg.max_epochs = 3;
    cfg.patience = 100;
    cfg.lr = 3e-3;
    cfg.warmup = 5;
    cfg.specaug.max_freq_width = 1;
    cfg.specaug.max_time_width = 2;
    return cfg;
  }
};

TEST(TrainAsr, IdenticalSeedsGiveIdenticalRuns) {
  Toy toy;
  std::vector<double> trace[2];
  for (int run = 0; run < 2; ++run) {
    AsrModel<double> model(toy.model, 9);
    RAdam<double> opt;
    const TrainResult r = TrainAsr(model, toy.train, toy.valid, toy.Config(), nullptr, opt);
    for (const auto &e : r.epochs) {
      trace[run].push_back(e.train_loss);
      trace[run].push_back(e.valid_loss);
    }
    trace[run].push_back(model.params().Get("dec.output.w").value.data[3]);
  }
  EXPECT_EQ(trace[0], trace[1]);
}

TEST(TrainAsr, LossDecreasesMonotonicallyWithSmallSteps) {
  Toy toy;
  TrainingConfig cfg = toy.Config();
  cfg.specaug.enabled = false;
  cfg.max_epochs = 20;  // one optimizer step per epoch
  cfg.lr = 1e-3;
  cfg.warmup = 1;
  AsrModel<double> model(toy.model, 4);
  RAdam<double> opt;
  const TrainResult r = TrainAsr(model, toy.train, toy.valid, cfg, nullptr, opt);
  ASSERT_EQ(r.epochs.size(), 20u);
  EXPECT_EQ(r.steps, 20u);
  for (std::size_t e = 1; e < r.epochs.size(); ++e)
    EXPECT_LT(r.epochs[e].train_loss, r.epochs[e - 1].train_loss) << "epoch " << e + 1;
}

TEST(TrainAsr, KdWithZeroAlphaEqualsMaximumLikelihood) {
  Toy toy;
  LanguageModel<double> lm(toy.model, 2);
  const TeacherCache teacher = ComputeTeacherDistributions(lm, toy.corpus.train, toy.vocab, 50, ContextMode::kHierarchical);
  TrainingConfig ml = toy.Config(), kd = toy.Config();
  kd.smoothing = Smoothing::kKd;
  kd.alpha = 0.0;
  const auto a = BuildTargets(toy.train, toy.vocab.size(), ml, nullptr);
  const auto b = BuildTargets(toy.train, toy.vocab.size(), kd, &teacher);
  EXPECT_EQ(a, b);
  AsrModel<double> m1(toy.model, 6), m2(toy.model, 6);
  RAdam<double> o1, o2;
  const TrainResult r1 = TrainAsr(m1, toy.train, toy.valid, ml, nullptr, o1);
  const TrainResult r2 = TrainAsr(m2, toy.train, toy.valid, kd, &teacher, o2);
  for (std::size_t e = 0; e < r1.epochs.size(); ++e) EXPECT_EQ(r1.epochs[e].train_loss, r2.epochs[e].train_loss);
  for (const auto &p : m1.params()) EXPECT_EQ(p.value, m2.params().Get(p.name).value) << p.name;
}

TEST(TrainAsr, KdNeedsAMatchingTeacher) {
  Toy toy;
  TrainingConfig kd = toy.Config();
  kd.smoothing = Smoothing::kKd;
  EXPECT_THROW(BuildTargets(toy.train, toy.vocab.size(), kd, nullptr), std::invalid_argument);
  TeacherCache wrong;
  wrong.vocab_size = toy.vocab.size() + 1;
  EXPECT_THROW(BuildTargets(toy.train, toy.vocab.size(), kd, &wrong), std::invalid_argument);
  TeacherCache empty;
  empty.vocab_size = toy.vocab.size();
  EXPECT_THROW(BuildTargets(toy.train, toy.vocab.size(), kd, &empty), std::invalid_argument);
}

TEST(TrainAsr, ModelLossGradientMatchesFiniteDifferences) {
  Toy toy;
  AsrModel<double> model(toy.model, 8);
  const Segment &s = toy.train.segments.front();
  std::span<const Tensor<double>> f(toy.train.features[s.discourse].data() + s.begin, s.size());
  std::span<const std::vector<int>> tx(toy.train.texts[s.discourse].data() + s.begin, s.size());
  auto loss = [&](Graph<double> &g) {
    auto lps = AsrSegmentLogProbs(g, model, f, tx, ContextMode::kHierarchical);
    Expr<double> total = SoftTargetNll(lps[0], OneHotTargets<double>(tx[0], toy.vocab.size()));
    for (std::size_t t = 1; t < lps.size(); ++t)
      total = Add(total, SoftTargetNll(lps[t], OneHotTargets<double>(tx[t], toy.vocab.size())));
    return total;
  };
  GradCheckOptions opt;
  opt.max_entries = 6;
  const GradCheckReport rep = GradCheckParams<double>(loss, model.params(), opt);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at " << rep.worst;
  EXPECT_GT(rep.checked, 100u);
}

TEST(RunTraining, EarlyStoppingHonoursPatienceAndRestoresBest) {
  ParameterSet<double> ps;
  auto &w = ps.Add("w", Tensor<double>::Matrix(1, 1, {1.0}));
  const std::vector<double> valid = {3.0, 2.0, 2.5, 2.6, 2.7, 1.0};
  std::size_t calls = 0;
  std::vector<double> snapshots;
  TrainingConfig cfg;
  cfg.patience = 3;
  cfg.max_epochs = 10;
  cfg.lr = 0.1;
  cfg.warmup = 1;
  RAdam<double> opt;
  const TrainResult r = detail::RunTraining<double>(
      ps, {1},
      [&](Graph<double> &g, std::size_t, std::size_t) {
        Expr<double> p = g.Param(w);
        return Sum(Mul(p, p));
      },
      [&]() {
        snapshots.push_back(w.value.data[0]);
        return valid[calls++];
      },
      cfg, opt, {});
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.epochs.size(), 5u);
  EXPECT_EQ(r.best_epoch, 2u);
  EXPECT_EQ(r.best_valid_loss, 2.0);
  EXPECT_EQ(w.value.data[0], snapshots[1]);
  EXPECT_THROW(detail::RunTraining<double>(ps, {}, {}, {}, cfg, opt, {}), std::invalid_argument);
}

}  // namespace
}  // namespace dsq
