// dsq/models.hpp

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

#ifndef DSQ_MODELS_HPP_
#define DSQ_MODELS_HPP_

#include <cstdint>
#include <optional>

#include "dsq/context_encoder.hpp"
#include "dsq/speech_encoder.hpp"
#include "dsq/text_decoder.hpp"

namespace dsq {

/// Large-context ASR model: parameter groups "henc." (hierarchical text
/// encoder), "senc." (speech encoder) and "dec." (text decoder).
template <typename T>
class AsrModel {
 public:
  AsrModel(const ModelConfig &cfg, std::uint64_t seed)
      : config_((cfg.Validate(), cfg)),
        init_rng_(Rng::Keyed(seed, 0xA5A5)),
        context_(params_, config_, init_rng_, "henc"),
        speech_(params_, config_, init_rng_, "senc"),
        decoder_(params_, config_, init_rng_, /*with_speech=*/true, "dec") {}

  AsrModel(const AsrModel &) = delete;
  AsrModel &operator=(const AsrModel &) = delete;

  const ModelConfig &config() const { return config_; }
  ParameterSet<T> &params() { return params_; }
  const ParameterSet<T> &params() const { return params_; }
  const ContextEncoder<T> &context_encoder() const { return context_; }
  const SpeechEncoder<T> &speech_encoder() const { return speech_; }
  const TextDecoder<T> &decoder() const { return decoder_; }

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  Rng init_rng_;
  ContextEncoder<T> context_;
  SpeechEncoder<T> speech_;
  TextDecoder<T> decoder_;
};

/// Large-context language model: the same hierarchical text encoder and a
/// decoder whose blocks have no speech attention layer.
template <typename T>
class LanguageModel {
 public:
  LanguageModel(const ModelConfig &cfg, std::uint64_t seed)
      : config_((cfg.Validate(), cfg)),
        init_rng_(Rng::Keyed(seed, 0x5A5A)),
        context_(params_, config_, init_rng_, "henc"),
        decoder_(params_, config_, init_rng_, /*with_speech=*/false, "dec") {}

  LanguageModel(const LanguageModel &) = delete;
  LanguageModel &operator=(const LanguageModel &) = delete;

  const ModelConfig &config() const { return config_; }
  ParameterSet<T> &params() { return params_; }
  const ParameterSet<T> &params() const { return params_; }
  const ContextEncoder<T> &context_encoder() const { return context_; }
  const TextDecoder<T> &decoder() const { return decoder_; }

  /// Next-token probabilities given a BOS-prefixed token prefix and a
  /// context memory (stacked Z rows or the sentinel).
  Tensor<T> StepProbs(const std::vector<int> &prefix, const Tensor<T> &context) const {
    DecoderState<T> st = decoder_.Start(decoder_.Prepare(nullptr, context));
    st.prefix = prefix;
    Tensor<T> p = decoder_.Step(st);
    for (auto &v : p.data) v = std::exp(v);
    return p;
  }

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  Rng init_rng_;
  ContextEncoder<T> context_;
  TextDecoder<T> decoder_;
};

}  // namespace dsq

#endif  // DSQ_MODELS_HPP_
