// dsq/context_encoder.hpp

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

#ifndef DSQ_CONTEXT_ENCODER_HPP_
#define DSQ_CONTEXT_ENCODER_HPP_

// Hierarchical text encoder. Each preceding utterance is embedded by K
// token-level encoder blocks and collapsed by attention pooling into one
// utterance vector S; the utterance vectors then pass through L causally
// masked utterance-level blocks to give the context memory Z.

#include <string>
#include <vector>

#include "dsq/blocks.hpp"
#include "dsq/model_config.hpp"

namespace dsq {

/// Per-discourse memory for incremental context construction.
/// layers[0] holds Z^(0) (S plus utterance position), layers[L] holds the
/// context memory rows the decoder attends to.
template <typename T>
struct ContextCache {
  std::vector<Tensor<T>> utterance_vectors;
  std::vector<std::vector<Tensor<T>>> layers;
  std::size_t start_index = 0;  // utterance position of the first entry

  std::size_t count() const { return utterance_vectors.size(); }

  bool consistent() const {
    for (const auto &l : layers)
      if (l.size() != count()) return false;
    return true;
  }
};

template <typename T>
class ContextEncoder {
 public:
  ContextEncoder(ParameterSet<T> &ps, const ModelConfig &cfg, Rng &rng,
                 const std::string &prefix = "henc")
      : cfg_(cfg) {
    const std::size_t d = cfg.block.d_model;
    embedding_ = &ps.Add(prefix + ".embedding", init::Normal<T>({cfg.vocab_size, d}, 1.0, rng));
    for (std::size_t k = 0; k < cfg.token_blocks; ++k)
      token_blocks_.push_back(
          EncoderBlock<T>::Create(ps, prefix + ".token" + std::to_string(k), cfg.block, rng));
    pooling_ = AttentionPooling<T>::Create(ps, prefix + ".pool", d, rng);
    for (std::size_t l = 0; l < cfg.utterance_blocks; ++l)
      utterance_blocks_.push_back(
          EncoderBlock<T>::Create(ps, prefix + ".utt" + std::to_string(l), cfg.block, rng));
    sentinel_ = &ps.Add(prefix + ".sentinel", init::Normal<T>({1, d}, 1.0, rng));
  }

  std::size_t num_layers() const { return utterance_blocks_.size(); }

  /// tokens -> S (1 x d). Callers pass the decoded text followed by EOS, so
  /// an empty utterance is the EOS token alone.
  Expr<T> EncodeUtterance(Graph<T> &g, const std::vector<int> &tokens,
                          Tensor<T> *pool_weights = nullptr) const {
    if (tokens.empty()) throw std::invalid_argument("cannot encode an empty token sequence");
    Expr<T> c = AddPosEnc(g, Embedding(g.Param(*embedding_), tokens), 0);
    for (const auto &b : token_blocks_) c = b(g, c);
    return pooling_(g, c, pool_weights);
  }

  /// Utterance vectors (T x d, one per row) -> Z^(L) (T x d) in one masked
  /// pass. Row j depends only on rows <= j.
  Expr<T> UtteranceStates(Graph<T> &g, Expr<T> utterance_vectors,
                          std::size_t start_index = 0) const {
    Expr<T> z = AddPosEnc(g, utterance_vectors, start_index);
    for (const auto &b : utterance_blocks_) z = b.Masked(g, z);
    return z;
  }

  Expr<T> Sentinel(Graph<T> &g) const { return g.Param(*sentinel_); }
  const Tensor<T> &sentinel() const { return sentinel_->value; }

  /// Adds one utterance vector to the cache, computing only the new row of
  /// every utterance-level layer. Earlier rows are left untouched.
  void AppendVector(ContextCache<T> &cache, const Tensor<T> &s) const {
    if (cache.layers.empty()) cache.layers.resize(num_layers() + 1);
    const std::size_t t = cache.count();
    Graph<T> g;
    cache.utterance_vectors.push_back(s);
    Expr<T> row = AddPosEnc(g, g.Constant(s), cache.start_index + t);
    cache.layers[0].push_back(row.value());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      Expr<T> memory = g.Constant(StackRows<T>(cache.layers[l]));
      row = utterance_blocks_[l].Forward(g, row, memory, nullptr);
      cache.layers[l + 1].push_back(row.value());
    }
  }

  /// Encodes `tokens` (eval mode) and appends the result.
  void Append(ContextCache<T> &cache, const std::vector<int> &tokens) const {
    Graph<T> g;
    AppendVector(cache, EncodeUtterance(g, tokens).value());
  }

  /// From-scratch construction over a list of utterances.
  ContextCache<T> Build(const std::vector<std::vector<int>> &texts,
                        std::size_t start_index = 0) const {
    ContextCache<T> cache;
    cache.start_index = start_index;
    cache.layers.resize(num_layers() + 1);
    if (texts.empty()) return cache;
    Graph<T> g;
    std::vector<Expr<T>> rows;
    for (const auto &t : texts) rows.push_back(EncodeUtterance(g, t));
    Expr<T> s = ConcatRows(rows);
    Expr<T> z = AddPosEnc(g, s, start_index);
    std::vector<Tensor<T>> per_layer{z.value()};
    for (const auto &b : utterance_blocks_) {
      z = b.Masked(g, z);
      per_layer.push_back(z.value());
    }
    for (std::size_t j = 0; j < texts.size(); ++j) {
      cache.utterance_vectors.push_back(RowOf(s.value(), j));
      for (std::size_t l = 0; l <= num_layers(); ++l)
        cache.layers[l].push_back(RowOf(per_layer[l], j));
    }
    return cache;
  }

  /// Context memory for the next utterance: stacked Z^(L) rows, or the
  /// learned sentinel when the history is empty.
  Tensor<T> Memory(const ContextCache<T> &cache) const {
    if (cache.count() == 0) return sentinel_->value;
    return StackRows<T>(cache.layers.back());
  }

 private:
  ModelConfig cfg_;
  Parameter<T> *embedding_ = nullptr;
  std::vector<EncoderBlock<T>> token_blocks_;
  AttentionPooling<T> pooling_;
  std::vector<EncoderBlock<T>> utterance_blocks_;
  Parameter<T> *sentinel_ = nullptr;
};

}  // namespace dsq

#endif  // DSQ_CONTEXT_ENCODER_HPP_
