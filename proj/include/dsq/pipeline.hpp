// dsq/pipeline.hpp

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

#ifndef DSQ_PIPELINE_HPP_
#define DSQ_PIPELINE_HPP_

// Glue shared by the command-line tool and the end-to-end tests: feature
// preparation, checkpoint save/load for both model kinds, split decoding.

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsq/cer.hpp"
#include "dsq/config.hpp"
#include "dsq/decoding.hpp"
#include "dsq/io.hpp"
#include "dsq/models.hpp"
#include "dsq/training.hpp"

namespace dsq {

/// Raw M x f features -> model input (before normalisation).
template <typename T>
Tensor<T> PrepareFeatures(const Tensor<float> &raw, bool deltas) {
  Tensor<T> x = raw.template cast<T>();
  return deltas ? AddDeltas(x) : x;
}

template <typename T>
FeatureStats<T> EstimateStats(const std::vector<DiscourseSample> &split, bool deltas) {
  std::vector<Tensor<T>> feats;
  for (const auto &d : split)
    for (const auto &u : d.utterances) feats.push_back(PrepareFeatures<T>(u.features, deltas));
  std::vector<const Tensor<T> *> ptrs;
  for (const auto &f : feats) ptrs.push_back(&f);
  return FeatureStats<T>::Estimate(ptrs);
}

struct CheckpointMeta {
  std::string kind;  // "asr" or "lm"
  std::string config;
  std::vector<std::string> vocab;
  std::size_t raw_feat_dim = 0;
};

inline std::string EncodeMeta(const CheckpointMeta &m) {
  nlohmann::json j;
  j["kind"] = m.kind;
  j["config"] = m.config;
  j["vocab"] = m.vocab;
  j["raw_feat_dim"] = m.raw_feat_dim;
  return j.dump();
}

inline CheckpointMeta DecodeMeta(const std::string &blob) {
  try {
    const auto j = nlohmann::json::parse(blob);
    CheckpointMeta m;
    m.kind = j.at("kind").get<std::string>();
    m.config = j.at("config").get<std::string>();
    m.vocab = j.at("vocab").get<std::vector<std::string>>();
    m.raw_feat_dim = j.at("raw_feat_dim").get<std::size_t>();
    return m;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("malformed checkpoint configuration: ") + e.what());
  }
}

template <typename T>
struct LoadedAsr {
  RunConfig config;
  Vocabulary vocab;
  FeatureStats<T> stats;
  std::size_t raw_feat_dim = 0;
  std::unique_ptr<AsrModel<T>> model;
};

template <typename T>
struct LoadedLm {
  RunConfig config;
  Vocabulary vocab;
  std::unique_ptr<LanguageModel<T>> model;
};

template <typename T>
void SaveAsr(const std::string &path, const AsrModel<T> &model, const RAdam<T> *optimizer,
             const Vocabulary &vocab, const FeatureStats<T> &stats, std::size_t raw_feat_dim,
             const RunConfig &config) {
  CheckpointData ck;
  ck.blob = EncodeMeta({"asr", config.ToText(), vocab.tokens(), raw_feat_dim});
  ExportParams(model.params(), ck.tensors);
  Tensor<T> mean({1, stats.mean.size()}, stats.mean);
  Tensor<T> sd({1, stats.stddev.size()}, stats.stddev);
  ck.tensors.push_back({"feat.mean", mean.template cast<double>(), sizeof(T) == 8});
  ck.tensors.push_back({"feat.std", sd.template cast<double>(), sizeof(T) == 8});
  if (optimizer) ExportOptimizer(*optimizer, ck);
  WriteCheckpoint(path, ck);
}

template <typename T>
LoadedAsr<T> LoadAsr(const std::string &path, RAdam<T> *optimizer = nullptr) {
  const CheckpointData ck = ReadCheckpoint(path);
  const CheckpointMeta meta = DecodeMeta(ck.blob);
  if (meta.kind != "asr") throw DataError(path + " is not an ASR checkpoint");
  LoadedAsr<T> out;
  out.config.Parse(meta.config, path);
  out.vocab = Vocabulary::FromTokens(meta.vocab);
  out.raw_feat_dim = meta.raw_feat_dim;
  out.model = std::make_unique<AsrModel<T>>(out.config.Model(out.vocab.size(), meta.raw_feat_dim),
                                            out.config.seed());
  ImportParams(out.model->params(), ck.tensors);
  for (const auto &t : ck.tensors) {
    if (t.name == "feat.mean")
      for (double v : t.value.data) out.stats.mean.push_back(static_cast<T>(v));
    if (t.name == "feat.std")
      for (double v : t.value.data) out.stats.stddev.push_back(static_cast<T>(v));
  }
  if (out.stats.mean.size() != out.model->config().feat_dim || out.stats.stddev.size() != out.stats.mean.size())
    throw DataError(path + ": feature statistics do not match the model");
  if (optimizer) ImportOptimizer(*optimizer, ck);
  return out;
}

template <typename T>
void SaveLm(const std::string &path, const LanguageModel<T> &model, const RAdam<T> *optimizer,
            const Vocabulary &vocab, const RunConfig &config) {
  CheckpointData ck;
  ck.blob = EncodeMeta({"lm", config.ToText(), vocab.tokens(), model.config().feat_dim});
  ExportParams(model.params(), ck.tensors);
  if (optimizer) ExportOptimizer(*optimizer, ck);
  WriteCheckpoint(path, ck);
}

template <typename T>
LoadedLm<T> LoadLm(const std::string &path, RAdam<T> *optimizer = nullptr) {
  const CheckpointData ck = ReadCheckpoint(path);
  const CheckpointMeta meta = DecodeMeta(ck.blob);
  if (meta.kind != "lm") throw DataError(path + " is not a language-model checkpoint");
  LoadedLm<T> out;
  out.config.Parse(meta.config, path);
  out.vocab = Vocabulary::FromTokens(meta.vocab);
  out.model = std::make_unique<LanguageModel<T>>(out.config.Model(out.vocab.size(), meta.raw_feat_dim),
                                                 out.config.seed());
  ImportParams(out.model->params(), ck.tensors);
  if (optimizer) ImportOptimizer(*optimizer, ck);
  return out;
}

/// Decodes every discourse of a split.
template <typename T>
TranscriptSet DecodeSplit(const AsrModel<T> &model, const Vocabulary &vocab, const FeatureStats<T> &stats,
                          bool deltas, const std::vector<DiscourseSample> &split, const DecodeConfig &cfg) {
  TranscriptSet out;
  for (const auto &d : split) {
    std::vector<Tensor<T>> feats;
    std::vector<std::vector<int>> refs;
    for (const auto &u : d.utterances) {
      feats.push_back(stats.Normalize(PrepareFeatures<T>(u.features, deltas)));
      refs.push_back(vocab.Encode(u.text));
      refs.back().push_back(Vocabulary::kEos);
    }
    const auto decoded = DecodeDiscourse(model, vocab, feats, &refs, cfg);
    for (std::size_t i = 0; i < decoded.size(); ++i) out[{d.id, i}] = decoded[i].text;
  }
  return out;
}

}  // namespace dsq

#endif  // DSQ_PIPELINE_HPP_
