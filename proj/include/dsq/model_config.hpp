// dsq/model_config.hpp

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

#ifndef DSQ_MODEL_CONFIG_HPP_
#define DSQ_MODEL_CONFIG_HPP_

#include <cstddef>
#include <stdexcept>

#include "dsq/blocks.hpp"

namespace dsq {

/// Architecture hyperparameters. Defaults are the full-size recipe
/// (d = 256, 4 heads, FFN 2048, K = L = 2, I = 8, J = 6); desk-scale runs
/// shrink them through the run config.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t feat_dim = 120;
  BlockConfig block;
  std::size_t token_blocks = 2;      // K
  std::size_t utterance_blocks = 2;  // L
  std::size_t speech_blocks = 8;     // I
  std::size_t decoder_blocks = 6;    // J
  std::size_t conv_channels1 = 32;
  std::size_t conv_channels2 = 32;

  void Validate() const {
    block.Validate();
    if (vocab_size < 5) throw std::invalid_argument("vocab_size must cover the reserved ids");
    if (token_blocks < 1 || utterance_blocks < 1)
      throw std::invalid_argument("context encoder needs K >= 1 and L >= 1");
    if (decoder_blocks < 1) throw std::invalid_argument("decoder needs J >= 1");
    if (feat_dim == 0 || conv_channels1 == 0 || conv_channels2 == 0)
      throw std::invalid_argument("speech front-end sizes must be positive");
  }
};

}  // namespace dsq

#endif  // DSQ_MODEL_CONFIG_HPP_
