// tests/decoding_test.cc

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
#include <functional>

#include <gtest/gtest.h>

#include "dsq/decoding.hpp"

namespace dsq {
namespace {

Tensor<double> Random(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<double> t(shape);
  for (auto &v : t.data) v = scale * rng.Normal();
  return t;
}

ModelConfig SmallConfig() {
  ModelConfig c;
  c.vocab_size = 6;
  c.feat_dim = 4;
  c.block.d_model = 8;
  c.block.n_heads = 2;
  c.block.d_ffn = 12;
  c.block.dropout = 0.0;
  c.token_blocks = 1;
  c.utterance_blocks = 1;
  c.speech_blocks = 1;
  c.decoder_blocks = 2;
  c.conv_channels1 = 2;
  c.conv_channels2 = 2;
  return c;
}

Vocabulary SmallVocab() { return Vocabulary::FromTokens({"<pad>", "<s>", "</s>", "<unk>", "a", "b"}); }

/// Random model whose output layer is sharpened so that distributions are
/// far from uniform.
struct Fixture {
  explicit Fixture(std::uint64_t seed, double sharpness = 40.0) : model(SmallConfig(), seed) {
    for (auto &v : model.params().Get("dec.output.w").value.data) v *= sharpness;
    Graph<double> g;
    speech = model.speech_encoder().Encode(g, Random({8, 4}, seed + 1)).value();
    context = model.context_encoder().sentinel();
  }
  std::shared_ptr<const DecoderSources<double>> Sources() const {
    return model.decoder().Prepare(&speech, context);
  }
  /// Teacher-forced log-probability of ids (EOS-terminated), computed in one
  /// full pass independently of the incremental decoder.
  double Score(const std::vector<int> &ids) const {
    Graph<double> g;
    const Tensor<double> lp =
        model.decoder().TeacherForced(g, ids, g.Constant(speech), g.Constant(context)).value();
    double s = 0;
    for (std::size_t n = 0; n < ids.size(); ++n) s += lp(n, static_cast<std::size_t>(ids[n]));
    return s;
  }
  AsrModel<double> model;
  Tensor<double> speech, context;
};

const std::vector<int> kExpandable = {Vocabulary::kEos, Vocabulary::kUnk, 4, 5};

TEST(BeamSearch, BeamOneIsGreedy) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Fixture f(seed);
    DecodeConfig cfg;
    cfg.beam_size = 1;
    cfg.max_len = 6;
    const BeamResult<double> r = BeamSearch(f.model.decoder(), f.Sources(), cfg);
    // Greedy: argmax over expandable ids, lowest id on ties.
    DecoderState<double> st = f.model.decoder().Start(f.Sources());
    std::vector<int> greedy = {Vocabulary::kBos};
    for (std::size_t n = 0; n < cfg.max_len; ++n) {
      const Tensor<double> lp = f.model.decoder().Step(st);
      int best = kExpandable[0];
      for (int v : kExpandable)
        if (lp.data[static_cast<std::size_t>(v)] > lp.data[static_cast<std::size_t>(best)]) best = v;
      greedy.push_back(best);
      st.prefix = greedy;
      if (best == Vocabulary::kEos) break;
    }
    ASSERT_EQ(r.ranked.size(), 1u);
    EXPECT_EQ(r.ranked.front().tokens, greedy) << "seed " << seed;
  }
}

TEST(BeamSearch, WideBeamMatchesExhaustiveEnumeration) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Fixture f(seed);
    DecodeConfig cfg;
    cfg.beam_size = 64;
    cfg.max_len = 3;
    std::vector<int> best;
    double best_score = -std::numeric_limits<double>::infinity();
    std::function<void(std::vector<int> &)> enumerate = [&](std::vector<int> &ids) {
      if (!ids.empty() && ids.back() == Vocabulary::kEos) {
        const double s = f.Score(ids);
        if (s > best_score) {
          best_score = s;
          best = ids;
        }
        return;
      }
      if (ids.size() == cfg.max_len) return;
      for (int v : kExpandable) {
        ids.push_back(v);
        enumerate(ids);
        ids.pop_back();
      }
    };
    std::vector<int> ids;
    enumerate(ids);
    const BeamResult<double> r = BeamSearch(f.model.decoder(), f.Sources(), cfg);
    ASSERT_FALSE(r.unfinished);
    std::vector<int> got(r.ranked.front().tokens.begin() + 1, r.ranked.front().tokens.end());
    EXPECT_EQ(got, best) << "seed " << seed;
    EXPECT_NEAR(r.ranked.front().log_prob, best_score, 1e-9);
  }
}

TEST(BeamSearch, RankedScoresAndRescoring) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    Fixture f(seed, 10.0);
    DecodeConfig cfg;
    cfg.beam_size = 4;
    cfg.max_len = 8;
    const BeamResult<double> r = BeamSearch(f.model.decoder(), f.Sources(), cfg);
    ASSERT_FALSE(r.ranked.empty());
    for (std::size_t k = 0; k < r.ranked.size(); ++k) {
      const auto &h = r.ranked[k];
      if (k > 0) {
        EXPECT_LE(h.log_prob, r.ranked[k - 1].log_prob);
      }
      EXPECT_TRUE(h.finished);
      EXPECT_EQ(h.tokens.front(), Vocabulary::kBos);
      EXPECT_EQ(h.tokens.back(), Vocabulary::kEos);
      for (std::size_t n = 1; n + 1 < h.tokens.size(); ++n) EXPECT_NE(h.tokens[n], Vocabulary::kEos);
      std::vector<int> ids(h.tokens.begin() + 1, h.tokens.end());
      EXPECT_NEAR(h.log_prob, f.Score(ids), 1e-6);
    }
  }
}

TEST(BeamSearch, UnfinishedWhenEosNeverWins) {
  Fixture f(3);
  f.model.params().Get("dec.output.b").value.data[Vocabulary::kEos] = -100.0;
  DecodeConfig cfg;
  cfg.beam_size = 2;
  cfg.max_len = 3;
  const BeamResult<double> r = BeamSearch(f.model.decoder(), f.Sources(), cfg);
  EXPECT_TRUE(r.unfinished);
  ASSERT_EQ(r.ranked.size(), cfg.beam_size);
  EXPECT_EQ(r.ranked.front().length(), 3u);
  EXPECT_FALSE(r.ranked.front().finished);
  EXPECT_EQ(r.ranked.front().Output().size(), 3u);
}

TEST(BeamSearch, TiesGoToTheLowerTokenId) {
  Fixture f(4);
  // Zero every output weight: all ids share the same log-probability.
  f.model.params().Get("dec.output.w").value.fill(0.0);
  DecodeConfig cfg;
  cfg.beam_size = 2;
  cfg.max_len = 2;
  const BeamResult<double> r = BeamSearch(f.model.decoder(), f.Sources(), cfg);
  // EOS (id 2) is the lowest expandable id, so it finishes at step one and
  // beats every longer hypothesis.
  EXPECT_EQ(r.ranked.front().tokens, (std::vector<int>{Vocabulary::kBos, Vocabulary::kEos}));
}

TEST(BeamSearch, LengthNormalisedRanking) {
  Fixture f(5, 10.0);
  DecodeConfig cfg;
  cfg.beam_size = 4;
  cfg.max_len = 6;
  cfg.length_norm = true;
  const BeamResult<double> r = BeamSearch(f.model.decoder(), f.Sources(), cfg);
  for (std::size_t k = 1; k < r.ranked.size(); ++k)
    EXPECT_LE(r.ranked[k].Score(true), r.ranked[k - 1].Score(true));
}

TEST(DecodeConfig, Validation) {
  DecodeConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.beam_size = 0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = DecodeConfig{};
  c.max_len = 0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

// ---------------------------------------------------------------- discourse

std::vector<Tensor<double>> Features(std::size_t n, std::uint64_t seed) {
  std::vector<Tensor<double>> out;
  for (std::size_t t = 0; t < n; ++t) out.push_back(Random({8 + 2 * t, 4}, seed + t));
  return out;
}

DecodeConfig DiscourseConfig(ContextSource src) {
  DecodeConfig cfg;
  cfg.max_len = 6;
  cfg.context = src;
  return cfg;
}

TEST(DecodeDiscourse, SingleUtteranceUsesTheSentinel) {
  Fixture f(6, 10.0);
  const auto feats = Features(1, 40);
  const auto out = DecodeDiscourse(f.model, SmallVocab(), feats, nullptr, DiscourseConfig(ContextSource::kHypothesis));
  Graph<double> g;
  const Tensor<double> speech = f.model.speech_encoder().Encode(g, feats[0]).value();
  const auto r = BeamSearch(f.model.decoder(), f.model.decoder().Prepare(&speech, f.model.context_encoder().sentinel()),
                            DiscourseConfig(ContextSource::kHypothesis));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].ids, r.ranked.front().Output());
  EXPECT_EQ(out[0].log_prob, r.ranked.front().log_prob);
}

TEST(DecodeDiscourse, CacheEqualsRebuildFromEmittedTexts) {
  Fixture f(7, 10.0);
  const auto feats = Features(5, 50);
  std::vector<std::vector<int>> fed;
  ContextCache<double> cache;
  const auto out = DecodeDiscourse(f.model, SmallVocab(), feats, nullptr, DiscourseConfig(ContextSource::kHypothesis),
                                   &fed, &cache);
  ASSERT_EQ(fed.size(), out.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    std::vector<int> expect = out[t].ids;
    expect.push_back(Vocabulary::kEos);
    EXPECT_EQ(fed[t], expect);
  }
  const Tensor<double> rebuilt = f.model.context_encoder().Memory(f.model.context_encoder().Build(fed));
  const Tensor<double> got = f.model.context_encoder().Memory(cache);
  ASSERT_EQ(rebuilt.shape, got.shape);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data[i], rebuilt.data[i], 1e-10);
}

TEST(DecodeDiscourse, OracleContextNeverReadsModelOutputs) {
  Fixture f(8, 10.0);
  const auto feats = Features(4, 60);
  const std::vector<std::vector<int>> refs = {{4, 4, 2}, {5, 2}, {4, 5, 5, 2}, {2}};
  std::vector<std::vector<int>> fed;
  DecodeDiscourse(f.model, SmallVocab(), feats, &refs, DiscourseConfig(ContextSource::kOracle), &fed);
  EXPECT_EQ(fed, refs);
  // A different model decodes differently, yet feeds exactly the same
  // context.
  Fixture other(9, 10.0);
  std::vector<std::vector<int>> fed_other;
  DecodeDiscourse(other.model, SmallVocab(), feats, &refs, DiscourseConfig(ContextSource::kOracle), &fed_other);
  EXPECT_EQ(fed_other, fed);
  EXPECT_THROW(DecodeDiscourse(f.model, SmallVocab(), feats, nullptr, DiscourseConfig(ContextSource::kOracle)),
               std::invalid_argument);
}

TEST(DecodeDiscourse, ModesCoincideWhenHypothesesAreReferences) {
  Fixture f(10, 10.0);
  const auto feats = Features(4, 70);
  const auto hyp = DecodeDiscourse(f.model, SmallVocab(), feats, nullptr, DiscourseConfig(ContextSource::kHypothesis));
  std::vector<std::vector<int>> refs;
  for (const auto &u : hyp) {
    refs.push_back(u.ids);
    refs.back().push_back(Vocabulary::kEos);
  }
  const auto oracle = DecodeDiscourse(f.model, SmallVocab(), feats, &refs, DiscourseConfig(ContextSource::kOracle));
  for (std::size_t t = 0; t < hyp.size(); ++t) {
    EXPECT_EQ(oracle[t].ids, hyp[t].ids);
    EXPECT_EQ(oracle[t].log_prob, hyp[t].log_prob);
  }
}

TEST(DecodeDiscourse, NoneModeMatchesPerUtteranceSentinelDecoding) {
  Fixture f(11, 10.0);
  const auto feats = Features(3, 80);
  std::vector<std::vector<int>> fed;
  const auto out = DecodeDiscourse(f.model, SmallVocab(), feats, nullptr, DiscourseConfig(ContextSource::kNone), &fed);
  EXPECT_TRUE(fed.empty());
  for (std::size_t t = 0; t < feats.size(); ++t) {
    const auto single = DecodeDiscourse(f.model, SmallVocab(), {feats[t]}, nullptr, DiscourseConfig(ContextSource::kHypothesis));
    EXPECT_EQ(out[t].ids, single[0].ids);
  }
}

TEST(DecodeDiscourse, ContextRestartsEverySegment) {
  Fixture f(12, 10.0);
  const auto feats = Features(5, 90);
  DecodeConfig cfg = DiscourseConfig(ContextSource::kHypothesis);
  cfg.segment_length = 2;
  ContextCache<double> cache;
  const auto out = DecodeDiscourse(f.model, SmallVocab(), feats, nullptr, cfg, nullptr, &cache);
  EXPECT_EQ(cache.count(), 1u);  // only utterance 5 since the last restart
  const std::vector<Tensor<double>> tail(feats.begin() + 2, feats.end());
  const auto restarted = DecodeDiscourse(f.model, SmallVocab(), tail, nullptr, cfg);
  for (std::size_t t = 0; t < tail.size(); ++t) EXPECT_EQ(out[t + 2].ids, restarted[t].ids);
}

}  // namespace
}  // namespace dsq
