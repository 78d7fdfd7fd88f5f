// dsq/decoding.hpp

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

#ifndef DSQ_DECODING_HPP_
#define DSQ_DECODING_HPP_

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsq/models.hpp"

namespace dsq {

/// Where the context memory of utterance t comes from while decoding.
enum class ContextSource {
  kHypothesis,  // 1-best outputs of utterances < t
  kOracle,      // reference texts of utterances < t
  kNone         // sentinel for every utterance
};

struct DecodeConfig {
  std::size_t beam_size = 4;
  std::size_t max_len = 100;  // output tokens per utterance, EOS included
  bool length_norm = false;
  ContextSource context = ContextSource::kHypothesis;
  std::size_t segment_length = 50;  // context restarts every this many utterances

  void Validate() const {
    if (beam_size == 0) throw std::invalid_argument("beam_size must be >= 1");
    if (max_len == 0) throw std::invalid_argument("max_len must be >= 1");
    if (segment_length == 0) throw std::invalid_argument("segment_length must be >= 1");
  }
};

template <typename T>
struct Hypothesis {
  std::vector<int> tokens;  // BOS-prefixed
  double log_prob = 0.0;
  bool finished = false;
  DecoderState<T> state;

  std::size_t length() const { return tokens.size() - 1; }
  double Score(bool length_norm) const {
    return length_norm && length() > 0 ? log_prob / static_cast<double>(length()) : log_prob;
  }
  /// Output ids without BOS and the final EOS.
  std::vector<int> Output() const {
    std::vector<int> out(tokens.begin() + 1, tokens.end());
    if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
    return out;
  }
};

template <typename T>
struct BeamResult {
  std::vector<Hypothesis<T>> ranked;  // best first
  bool unfinished = false;            // nothing emitted EOS within max_len
};

/// Beam search over one utterance. Every live hypothesis is expanded over all
/// ids except PAD and BOS; the best beam_size candidates by accumulated
/// log-probability survive (ties: lower token id, then earlier hypothesis).
/// Candidates ending in EOS retire to the finished pool.
template <typename T>
BeamResult<T> BeamSearch(const TextDecoder<T> &decoder,
                         std::shared_ptr<const DecoderSources<T>> sources,
                         const DecodeConfig &cfg) {
  cfg.Validate();
  struct Candidate {
    double log_prob;
    int token;
    std::size_t parent;
  };
  std::vector<Hypothesis<T>> live(1);
  live[0].state = decoder.Start(std::move(sources));
  live[0].tokens = live[0].state.prefix;
  std::vector<Hypothesis<T>> finished;
  const std::size_t vocab = decoder.vocab_size();
  for (std::size_t step = 0; step < cfg.max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const Tensor<T> lp = decoder.Step(live[i].state);
      for (std::size_t v = 0; v < vocab; ++v) {
        if (v == static_cast<std::size_t>(Vocabulary::kPad) ||
            v == static_cast<std::size_t>(Vocabulary::kBos))
          continue;
        cands.push_back({live[i].log_prob + static_cast<double>(lp.data[v]), static_cast<int>(v), i});
      }
    }
    const std::size_t keep = std::min(cfg.beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [](const Candidate &a, const Candidate &b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    std::vector<Hypothesis<T>> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate &c = cands[k];
      Hypothesis<T> h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      if (c.token == Vocabulary::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        h.state = live[c.parent].state;
        h.state.prefix = h.tokens;
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    // Without length normalisation extensions can only lower a score, so
    // a finished hypothesis that beats every live one is final.
    if (!cfg.length_norm && !finished.empty() && !live.empty()) {
      double best_finished = finished.front().log_prob;
      for (const auto &h : finished) best_finished = std::max(best_finished, h.log_prob);
      double best_live = live.front().log_prob;
      for (const auto &h : live) best_live = std::max(best_live, h.log_prob);
      if (best_finished >= best_live) break;
    }
  }
  BeamResult<T> result;
  auto by_score = [&](const Hypothesis<T> &a, const Hypothesis<T> &b) {
    return a.Score(cfg.length_norm) > b.Score(cfg.length_norm);
  };
  if (finished.empty()) {
    result.unfinished = true;
    result.ranked = std::move(live);
  } else {
    result.ranked = std::move(finished);
  }
  std::stable_sort(result.ranked.begin(), result.ranked.end(), by_score);
  for (auto &h : result.ranked) h.state = DecoderState<T>{};
  return result;
}

/// Per-utterance result of discourse decoding.
struct UtteranceDecode {
  std::vector<int> ids;  // without BOS/EOS
  std::string text;
  double log_prob = 0.0;
  bool unfinished = false;
};

/// Decodes the utterances of one discourse in order. `features` are
/// normalized M x f matrices; `references` (EOS-terminated ids) are required
/// in oracle mode only. `fed_context`, when given, receives the id sequences
/// appended to the context cache, and `final_cache` the cache after the last
/// utterance.
template <typename T>
std::vector<UtteranceDecode> DecodeDiscourse(const AsrModel<T> &model, const Vocabulary &vocab,
                                             const std::vector<Tensor<T>> &features,
                                             const std::vector<std::vector<int>> *references,
                                             const DecodeConfig &cfg,
                                             std::vector<std::vector<int>> *fed_context = nullptr,
                                             ContextCache<T> *final_cache = nullptr) {
  cfg.Validate();
  if (cfg.context == ContextSource::kOracle && (!references || references->size() != features.size()))
    throw std::invalid_argument("oracle context needs one reference per utterance");
  const auto &henc = model.context_encoder();
  std::vector<UtteranceDecode> out;
  ContextCache<T> cache;
  for (std::size_t t = 0; t < features.size(); ++t) {
    if (t % cfg.segment_length == 0) cache = ContextCache<T>{};
    const Tensor<T> memory = cfg.context == ContextSource::kNone ? henc.sentinel() : henc.Memory(cache);
    Tensor<T> speech;
    {
      Graph<T> g;
      speech = model.speech_encoder().Encode(g, features[t]).value();
    }
    BeamResult<T> beam = BeamSearch(model.decoder(), model.decoder().Prepare(&speech, memory), cfg);
    const Hypothesis<T> &best = beam.ranked.front();
    UtteranceDecode u;
    u.ids = best.Output();
    u.text = vocab.Decode(u.ids);
    u.log_prob = best.log_prob;
    u.unfinished = beam.unfinished;
    out.push_back(u);
    if (cfg.context == ContextSource::kNone) continue;
    std::vector<int> ctx;
    if (cfg.context == ContextSource::kOracle) {
      ctx = (*references)[t];
      if (ctx.empty() || ctx.back() != Vocabulary::kEos) ctx.push_back(Vocabulary::kEos);
    } else {
      ctx = u.ids;
      ctx.push_back(Vocabulary::kEos);
    }
    henc.Append(cache, ctx);
    if (fed_context) fed_context->push_back(ctx);
  }
  if (final_cache) *final_cache = std::move(cache);
  return out;
}

}  // namespace dsq

#endif  // DSQ_DECODING_HPP_
