// tests/language_model_test.cc

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
#include <cstdio>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "dsq/io.hpp"
#include "dsq/training.hpp"

namespace dsq {
namespace {

SynthTaskConfig ToyTask() {
  SynthTaskConfig c;
  c.vocab_size = 5;
  c.utterances = 3;
  c.tokens = 4;
  c.n_topics = 2;
  c.n_groups = 2;
  c.feat_dim = 4;
  c.n_train = 3;
  c.n_valid = 2;
  c.n_test = 1;
  return c;
}

ModelConfig SmallConfig(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
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

struct Fixture {
  SyntheticCorpus corpus = GenerateSyntheticCorpus(ToyTask());
  Vocabulary vocab = Vocabulary::Build(AllTexts(corpus.train));
  LanguageModel<double> lm{SmallConfig(vocab.size()), 3};
};

TEST(LanguageModel, DecoderHasNoSpeechAttention) {
  Fixture f;
  for (std::size_t j = 0; j < f.lm.decoder().num_blocks(); ++j) EXPECT_FALSE(f.lm.decoder().block(j).has_speech());
  for (const auto &p : f.lm.params()) {
    EXPECT_EQ(p.name.find(".speech"), std::string::npos) << p.name;
    EXPECT_EQ(p.name.rfind("senc", 0), std::string::npos) << p.name;
  }
}

TEST(LanguageModel, SharesNoParametersWithAsr) {
  Fixture f;
  AsrModel<double> asr(SmallConfig(f.vocab.size()), 3);
  std::set<const void *> lm_storage;
  for (const auto &p : f.lm.params()) lm_storage.insert(p.value.data.data());
  for (const auto &p : asr.params()) EXPECT_FALSE(lm_storage.count(p.value.data.data())) << p.name;
  const Tensor<double> before = f.lm.params().Get("henc.embedding").value;
  asr.params().Get("henc.embedding").value.fill(0.0);
  EXPECT_EQ(f.lm.params().Get("henc.embedding").value, before);
}

TEST(LanguageModel, StepProbsAreDistributions) {
  Fixture f;
  const Tensor<double> ctx = f.lm.context_encoder().sentinel();
  for (const std::vector<int> &prefix : {std::vector<int>{Vocabulary::kBos}, std::vector<int>{Vocabulary::kBos, 4, 5}}) {
    const Tensor<double> p = f.lm.StepProbs(prefix, ctx);
    ASSERT_EQ(p.size(), f.vocab.size());
    double s = 0;
    for (double v : p.data) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_THROW(f.lm.StepProbs({4}, ctx), std::invalid_argument);
}

TEST(LanguageModel, StepIsCausal) {
  Fixture f;
  ContextCache<double> cache;
  f.lm.context_encoder().Append(cache, {4, 5, Vocabulary::kEos});
  const Tensor<double> ctx = f.lm.context_encoder().Memory(cache);
  // The distribution after a prefix does not depend on what follows it:
  // compare the stepwise output with the matching row of a longer pass.
  Graph<double> g;
  const Tensor<double> lp =
      f.lm.decoder().LogProbs(g, {Vocabulary::kBos, 4, 6, 5}, std::nullopt, g.Constant(ctx)).value();
  const Tensor<double> p = f.lm.StepProbs({Vocabulary::kBos, 4}, ctx);
  for (std::size_t v = 0; v < p.size(); ++v) EXPECT_NEAR(std::log(p.data[v]), lp(1, v), 1e-10);
}

TEST(LanguageModel, InitialLossIsNearLogVocabulary) {
  Fixture f;
  const auto split = PreparedSplit<double>::Make(f.corpus.train, f.vocab, nullptr, 50);
  const double loss = LmEvalLoss(f.lm, split, ContextMode::kHierarchical);
  const double expected = std::log(static_cast<double>(f.vocab.size()));
  EXPECT_NEAR(loss, expected, 0.05 * expected);
}

TEST(TeacherDistributions, SumToOneAndCoverEveryPosition) {
  Fixture f;
  const TeacherCache cache = ComputeTeacherDistributions(f.lm, f.corpus.train, f.vocab, 50, ContextMode::kHierarchical);
  EXPECT_EQ(cache.vocab_hash, f.vocab.Hash());
  EXPECT_FALSE(cache.context_free);
  std::size_t positions = 0, tokens = 0;
  for (const auto &d : f.corpus.train) {
    const auto &utts = cache.lectures.at(d.id);
    ASSERT_EQ(utts.size(), d.utterances.size());
    for (std::size_t u = 0; u < utts.size(); ++u) {
      tokens += f.vocab.Encode(d.utterances[u].text).size() + 1;
      positions += utts[u].rows();
      for (std::size_t n = 0; n < utts[u].rows(); ++n) {
        double s = 0;
        for (float v : utts[u].row(n)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
  EXPECT_EQ(positions, tokens);
}

TEST(TeacherDistributions, IncrementalMatchesTeacherForcedSegment) {
  Fixture f;
  const TeacherCache cache = ComputeTeacherDistributions(f.lm, f.corpus.train, f.vocab, 50, ContextMode::kHierarchical);
  const auto split = PreparedSplit<double>::Make(f.corpus.train, f.vocab, nullptr, 50);
  const Segment &s = split.segments.front();
  Graph<double> g;
  std::span<const std::vector<int>> tx(split.texts[s.discourse].data() + s.begin, s.size());
  const auto lps = LmSegmentLogProbs(g, f.lm, tx, ContextMode::kHierarchical);
  const auto &utts = cache.lectures.at(split.ids[s.discourse]);
  for (std::size_t t = 0; t < lps.size(); ++t)
    for (std::size_t i = 0; i < utts[t].size(); ++i)
      EXPECT_NEAR(utts[t].data[i], std::exp(lps[t].value().data[i]), 1e-6);
}

TEST(TeacherDistributions, ContextFreeIgnoresHistory) {
  Fixture f;
  const TeacherCache cache = ComputeTeacherDistributions(f.lm, f.corpus.train, f.vocab, 50, ContextMode::kNone);
  EXPECT_TRUE(cache.context_free);
  const auto &d = f.corpus.train.front();
  std::vector<int> ids = f.vocab.Encode(d.utterances[2].text);
  ids.push_back(Vocabulary::kEos);
  Graph<double> g;
  const Tensor<double> lp =
      f.lm.decoder().TeacherForced(g, ids, std::nullopt, g.Constant(f.lm.context_encoder().sentinel())).value();
  for (std::size_t i = 0; i < lp.size(); ++i)
    EXPECT_NEAR(cache.lectures.at(d.id)[2].data[i], std::exp(lp.data[i]), 1e-6);
}

TEST(TeacherDistributions, CacheRoundTrip) {
  Fixture f;
  const TeacherCache cache = ComputeTeacherDistributions(f.lm, f.corpus.train, f.vocab, 2, ContextMode::kHierarchical);
  const std::string path = (std::filesystem::temp_directory_path() / "dsq_lm_teacher.dstc").string();
  WriteTeacherCache(path, cache);
  const TeacherCache back = ReadTeacherCache(path);
  std::remove(path.c_str());
  EXPECT_EQ(back.vocab_hash, cache.vocab_hash);
  EXPECT_EQ(back.vocab_size, cache.vocab_size);
  ASSERT_EQ(back.lectures.size(), cache.lectures.size());
  const TeacherCache again = ComputeTeacherDistributions(f.lm, f.corpus.train, f.vocab, 2, ContextMode::kHierarchical);
  for (const auto &[id, utts] : again.lectures) {
    ASSERT_EQ(back.lectures.at(id).size(), utts.size());
    for (std::size_t u = 0; u < utts.size(); ++u)
      for (std::size_t i = 0; i < utts[u].size(); ++i)
        EXPECT_NEAR(back.lectures.at(id)[u].data[i], utts[u].data[i], 1e-6);
  }
}

TEST(TeacherDistributions, VocabularyMismatchIsRejected) {
  Fixture f;
  const Vocabulary other = Vocabulary::Build({"xyz"});
  EXPECT_THROW(ComputeTeacherDistributions(f.lm, f.corpus.train, other, 50, ContextMode::kHierarchical),
               std::invalid_argument);
  TeacherCache cache = ComputeTeacherDistributions(f.lm, f.corpus.train, f.vocab, 50, ContextMode::kHierarchical);
  EXPECT_NO_THROW(CheckTeacherVocabulary(cache, f.vocab));
  // Same size, different symbols.
  std::vector<std::string> tokens = f.vocab.tokens();
  tokens.back() = "~";
  EXPECT_THROW(CheckTeacherVocabulary(cache, Vocabulary::FromTokens(tokens)), std::invalid_argument);
}

TEST(TrainLm, DeterministicAndRejectsEmptyCorpus) {
  Fixture f;
  const auto train = PreparedSplit<double>::Make(f.corpus.train, f.vocab, nullptr, 50);
  const auto valid = PreparedSplit<double>::Make(f.corpus.valid, f.vocab, nullptr, 50);
  TrainingConfig cfg;
  cfg.batch_size = 2;
  cfg.max_epochs = 2;
  cfg.lr = 1e-2;
  cfg.warmup = 4;
  std::vector<double> losses[2];
  for (int run = 0; run < 2; ++run) {
    LanguageModel<double> lm(SmallConfig(f.vocab.size()), 5);
    RAdam<double> opt(cfg.radam);
    const TrainResult r = TrainLm(lm, train, valid, cfg, opt);
    for (const auto &e : r.epochs) losses[run].push_back(e.train_loss);
    losses[run].push_back(r.best_valid_loss);
  }
  EXPECT_EQ(losses[0], losses[1]);
  LanguageModel<double> lm(SmallConfig(f.vocab.size()), 5);
  RAdam<double> opt(cfg.radam);
  const auto empty = PreparedSplit<double>::Make({}, f.vocab, nullptr, 50);
  EXPECT_THROW(TrainLm(lm, empty, valid, cfg, opt), std::invalid_argument);
}

}  // namespace
}  // namespace dsq
