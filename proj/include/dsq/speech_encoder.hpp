// dsq/speech_encoder.hpp

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

#ifndef DSQ_SPEECH_ENCODER_HPP_
#define DSQ_SPEECH_ENCODER_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dsq/blocks.hpp"
#include "dsq/model_config.hpp"

namespace dsq {

/// Per-dimension mean / standard deviation estimated on training features.
template <typename T>
struct FeatureStats {
  std::vector<T> mean;
  std::vector<T> stddev;

  static constexpr double kVarianceFloor = 1e-10;

  /// Accumulates over M x f feature matrices.
  static FeatureStats Estimate(const std::vector<const Tensor<T> *> &utterances) {
    if (utterances.empty()) throw std::invalid_argument("no features to estimate statistics from");
    const std::size_t f = utterances.front()->cols();
    std::vector<double> sum(f, 0.0), sq(f, 0.0);
    double frames = 0;
    for (const auto *u : utterances) {
      if (u->cols() != f) throw DimensionError("feature dimension differs across utterances");
      for (std::size_t m = 0; m < u->rows(); ++m)
        for (std::size_t j = 0; j < f; ++j) {
          const double v = (*u)(m, j);
          sum[j] += v;
          sq[j] += v * v;
        }
      frames += static_cast<double>(u->rows());
    }
    FeatureStats s;
    for (std::size_t j = 0; j < f; ++j) {
      const double mu = sum[j] / frames;
      const double var = std::max(sq[j] / frames - mu * mu, 0.0);
      s.mean.push_back(static_cast<T>(mu));
      s.stddev.push_back(static_cast<T>(std::sqrt(var + kVarianceFloor)));
    }
    return s;
  }

  Tensor<T> Normalize(const Tensor<T> &x) const {
    Check(x);
    Tensor<T> y = x;
    for (std::size_t m = 0; m < x.rows(); ++m)
      for (std::size_t j = 0; j < x.cols(); ++j) y(m, j) = (x(m, j) - mean[j]) / stddev[j];
    return y;
  }

  Tensor<T> Denormalize(const Tensor<T> &y) const {
    Check(y);
    Tensor<T> x = y;
    for (std::size_t m = 0; m < y.rows(); ++m)
      for (std::size_t j = 0; j < y.cols(); ++j) x(m, j) = y(m, j) * stddev[j] + mean[j];
    return x;
  }

 private:
  void Check(const Tensor<T> &x) const {
    if (x.rank() != 2 || x.cols() != mean.size())
      throw DimensionError("features " + ShapeString(x.shape) + " do not match statistics of width " +
                           std::to_string(mean.size()));
  }
};

/// Appends delta and acceleration coefficients (regression window of 2
/// frames, edges replicated): M x f -> M x 3f.
template <typename T>
Tensor<T> AddDeltas(const Tensor<T> &x) {
  auto deltas = [](const Tensor<T> &in) {
    const long m = static_cast<long>(in.rows());
    const std::size_t f = in.cols();
    Tensor<T> out({in.rows(), f});
    auto at = [&](long t, std::size_t j) { return in(static_cast<std::size_t>(std::clamp(t, 0L, m - 1)), j); };
    for (long t = 0; t < m; ++t)
      for (std::size_t j = 0; j < f; ++j) {
        T num = 0;
        for (long k = 1; k <= 2; ++k) num += T(k) * (at(t + k, j) - at(t - k, j));
        out(static_cast<std::size_t>(t), j) = num / T(10);  // 2 * (1 + 4)
      }
    return out;
  };
  const Tensor<T> d1 = deltas(x);
  const Tensor<T> d2 = deltas(d1);
  const std::size_t f = x.cols();
  Tensor<T> out({x.rows(), 3 * f});
  for (std::size_t t = 0; t < x.rows(); ++t)
    for (std::size_t j = 0; j < f; ++j) {
      out(t, j) = x(t, j);
      out(t, f + j) = d1(t, j);
      out(t, 2 * f + j) = d2(t, j);
    }
  return out;
}

/// Convolution front-end, positions, then I unmasked encoder blocks.
template <typename T>
class SpeechEncoder {
 public:
  SpeechEncoder(ParameterSet<T> &ps, const ModelConfig &cfg, Rng &rng,
                const std::string &prefix = "senc") {
    frontend_ = ConvolutionPooling<T>::Create(ps, prefix + ".frontend", cfg.feat_dim,
                                              cfg.conv_channels1, cfg.conv_channels2,
                                              cfg.block.d_model, rng);
    for (std::size_t i = 0; i < cfg.speech_blocks; ++i)
      blocks_.push_back(EncoderBlock<T>::Create(ps, prefix + ".block" + std::to_string(i),
                                                cfg.block, rng));
  }

  /// features: M x f frames -> M' x d memory.
  Expr<T> Encode(Graph<T> &g, const Tensor<T> &features) const {
    Expr<T> h = AddPosEnc(g, frontend_(g, g.Constant(features)), 0);
    for (const auto &b : blocks_) h = b(g, h);
    return h;
  }

  /// Pads the front-end outputs of several utterances to a common length,
  /// runs the encoder blocks once with key masking, and returns each
  /// utterance's valid rows.
  std::vector<Tensor<T>> EncodeBatch(Graph<T> &g, const std::vector<Tensor<T>> &batch) const {
    std::vector<Expr<T>> fronts;
    std::size_t longest = 0;
    for (const auto &x : batch) {
      fronts.push_back(AddPosEnc(g, frontend_(g, g.Constant(x)), 0));
      longest = std::max(longest, fronts.back().rows());
    }
    const std::size_t b = batch.size(), d = fronts.front().cols();
    std::vector<Expr<T>> padded;
    AttentionMask mask(b * longest, b * longest, false);
    for (std::size_t u = 0; u < b; ++u) {
      const std::size_t len = fronts[u].rows();
      padded.push_back(fronts[u]);
      if (len < longest) padded.push_back(g.Constant(Tensor<T>({longest - len, d})));
      for (std::size_t q = 0; q < longest; ++q)
        for (std::size_t k = 0; k < len; ++k) mask.set(u * longest + q, u * longest + k, true);
    }
    Expr<T> h = ConcatRows(padded);
    for (const auto &blk : blocks_) h = blk(g, h, &mask);
    std::vector<Tensor<T>> out;
    for (std::size_t u = 0; u < b; ++u)
      out.push_back(SliceRows(h, u * longest, fronts[u].rows()).value());
    return out;
  }

 private:
  ConvolutionPooling<T> frontend_;
  std::vector<EncoderBlock<T>> blocks_;
};

}  // namespace dsq

#endif  // DSQ_SPEECH_ENCODER_HPP_
