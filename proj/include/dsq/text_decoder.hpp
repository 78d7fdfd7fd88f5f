// dsq/text_decoder.hpp

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

#ifndef DSQ_TEXT_DECODER_HPP_
#define DSQ_TEXT_DECODER_HPP_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsq/blocks.hpp"
#include "dsq/model_config.hpp"
#include "dsq/vocabulary.hpp"

namespace dsq {

/// Source memories projected once per utterance for every decoder layer.
template <typename T>
struct DecoderSources {
  std::vector<ProjectedMemory<T>> speech;  // empty for the text-only decoder
  std::vector<ProjectedMemory<T>> context;
};

/// Incremental decoding state: token prefix plus per-layer self-attention
/// key/value rows of every position processed so far.
template <typename T>
struct DecoderState {
  std::vector<int> prefix;
  std::vector<Tensor<T>> self_keys;
  std::vector<Tensor<T>> self_values;
  std::size_t processed = 0;
  std::shared_ptr<const DecoderSources<T>> sources;
};

/// Token-level decoder. With speech attention it is the ASR decoder; without
/// it, the text-only decoder of the language model.
template <typename T>
class TextDecoder {
 public:
  TextDecoder(ParameterSet<T> &ps, const ModelConfig &cfg, Rng &rng, bool with_speech,
              const std::string &prefix = "dec")
      : vocab_size_(cfg.vocab_size), d_(cfg.block.d_model) {
    embedding_ = &ps.Add(prefix + ".embedding", init::Normal<T>({cfg.vocab_size, d_}, 1.0, rng));
    for (std::size_t j = 0; j < cfg.decoder_blocks; ++j)
      blocks_.push_back(DecoderBlock<T>::Create(ps, prefix + ".block" + std::to_string(j), cfg.block,
                                                with_speech, rng));
    // Small output weights and zero bias keep the initial distribution
    // close to uniform.
    output_ = Linear<T>::Create(ps, prefix + ".output", d_, cfg.vocab_size, rng, 0.02);
  }

  bool has_speech() const { return blocks_.front().has_speech(); }
  std::size_t num_blocks() const { return blocks_.size(); }
  std::size_t vocab_size() const { return vocab_size_; }
  const DecoderBlock<T> &block(std::size_t j) const { return blocks_.at(j); }

  /// Log-distributions for every position of `inputs` (BOS followed by the
  /// conditioning tokens): row n is log P(next | inputs[0..n]).
  Expr<T> LogProbs(Graph<T> &g, const std::vector<int> &inputs, std::optional<Expr<T>> speech,
                   Expr<T> context) const {
    CheckPrefix(inputs);
    Expr<T> u = AddPosEnc(g, Embedding(g.Param(*embedding_), inputs), 0);
    for (const auto &b : blocks_) u = b(g, u, speech, context);
    return LogSoftmaxRows(output_(g, u));
  }

  /// Teacher forcing over a reference ending in EOS: returns len(tokens)
  /// rows, row n predicting tokens[n].
  Expr<T> TeacherForced(Graph<T> &g, const std::vector<int> &tokens, std::optional<Expr<T>> speech,
                        Expr<T> context) const {
    if (tokens.empty()) throw std::invalid_argument("teacher forcing needs at least one token");
    if (tokens.back() != Vocabulary::kEos)
      throw std::invalid_argument("teacher-forced reference must end with EOS");
    std::vector<int> inputs{Vocabulary::kBos};
    inputs.insert(inputs.end(), tokens.begin(), tokens.end() - 1);
    return LogProbs(g, inputs, speech, context);
  }

  std::shared_ptr<const DecoderSources<T>> Prepare(const Tensor<T> *speech,
                                                   const Tensor<T> &context) const {
    if (has_speech() && !speech) throw std::invalid_argument("ASR decoder needs a speech memory");
    auto src = std::make_shared<DecoderSources<T>>();
    Graph<T> g;
    Expr<T> ctx = g.Constant(context);
    std::optional<Expr<T>> sp;
    if (speech) sp = g.Constant(*speech);
    for (const auto &b : blocks_) {
      if (b.has_speech()) src->speech.push_back(b.ProjectSpeech(g, *sp));
      src->context.push_back(b.ProjectContext(g, ctx));
    }
    return src;
  }

  DecoderState<T> Start(std::shared_ptr<const DecoderSources<T>> sources) const {
    DecoderState<T> s;
    s.prefix = {Vocabulary::kBos};
    s.self_keys.resize(blocks_.size());
    s.self_values.resize(blocks_.size());
    s.sources = std::move(sources);
    return s;
  }

  /// Processes any not-yet-seen prefix positions and returns the 1 x V
  /// log-distribution of the next token.
  Tensor<T> Step(DecoderState<T> &state) const {
    CheckPrefix(state.prefix);
    Tensor<T> out;
    for (; state.processed < state.prefix.size(); ++state.processed) {
      Graph<T> g;
      const std::size_t pos = state.processed;
      Expr<T> x = Add(Embedding(g.Param(*embedding_), {state.prefix[pos]}),
                      g.Constant(PositionalEncoding<T>(1, d_, pos)));
      for (std::size_t j = 0; j < blocks_.size(); ++j) {
        const ProjectedMemory<T> *sp = blocks_[j].has_speech() ? &state.sources->speech[j] : nullptr;
        x = blocks_[j].Step(g, x, state.self_keys[j], state.self_values[j], sp,
                            state.sources->context[j]);
      }
      if (pos + 1 == state.prefix.size()) out = LogSoftmaxRows(output_(g, x)).value();
    }
    if (out.empty()) throw std::logic_error("decoder state has no new position to process");
    return out;
  }

 private:
  static void CheckPrefix(const std::vector<int> &prefix) {
    if (prefix.empty() || prefix.front() != Vocabulary::kBos)
      throw std::invalid_argument("decoder prefix must start with BOS");
    for (std::size_t i = 0; i + 1 < prefix.size(); ++i)
      if (prefix[i] == Vocabulary::kEos)
        throw std::invalid_argument("decoder prefix has EOS before its last position");
  }

  std::size_t vocab_size_;
  std::size_t d_;
  Parameter<T> *embedding_ = nullptr;
  std::vector<DecoderBlock<T>> blocks_;
  Linear<T> output_;
};

}  // namespace dsq

#endif  // DSQ_TEXT_DECODER_HPP_
