// dsq/blocks.hpp

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

#ifndef DSQ_BLOCKS_HPP_
#define DSQ_BLOCKS_HPP_

// Transformer building blocks shared by the context encoder, the speech
// encoder and the text decoder. Every block reads its weights from a
// ParameterSet and builds graph nodes on demand; the blocks themselves hold
// only parameter pointers.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dsq/graph.hpp"
#include "dsq/ops.hpp"
#include "dsq/rng.hpp"

namespace dsq {

struct BlockConfig {
  std::size_t d_model = 256;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 2048;
  double dropout = 0.1;

  void Validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
      throw std::invalid_argument("d_model must be a positive multiple of n_heads");
    if (d_model % 2 != 0) throw std::invalid_argument("d_model must be even for sinusoidal positions");
    if (d_ffn == 0) throw std::invalid_argument("d_ffn must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
  }
};

namespace init {

template <typename T>
Tensor<T> Xavier(std::size_t fan_in, std::size_t fan_out, Rng &rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t({fan_in, fan_out});
  for (auto &v : t.data) v = static_cast<T>(rng.Uniform(-a, a));
  return t;
}

template <typename T>
Tensor<T> Normal(Shape shape, double stddev, Rng &rng) {
  Tensor<T> t(std::move(shape));
  for (auto &v : t.data) v = static_cast<T>(stddev * rng.Normal());
  return t;
}

}  // namespace init

/// x W + b with W: in x out and b: 1 x out.
template <typename T>
struct Linear {
  Parameter<T> *weight = nullptr;
  Parameter<T> *bias = nullptr;

  static Linear Create(ParameterSet<T> &ps, const std::string &name, std::size_t in,
                       std::size_t out, Rng &rng, double init_std = -1.0) {
    Linear l;
    l.weight = &ps.Add(name + ".w", init_std > 0 ? init::Normal<T>({in, out}, init_std, rng)
                                                  : init::Xavier<T>(in, out, rng));
    l.bias = &ps.Add(name + ".b", Tensor<T>({1, out}));
    return l;
  }

  Expr<T> operator()(Graph<T> &g, Expr<T> x) const {
    return AddRow(MatMul(x, g.Param(*weight)), g.Param(*bias));
  }
};

template <typename T>
struct LayerNorm {
  Parameter<T> *gain = nullptr;
  Parameter<T> *bias = nullptr;

  static LayerNorm Create(ParameterSet<T> &ps, const std::string &name, std::size_t d) {
    LayerNorm n;
    n.gain = &ps.Add(name + ".gain", Tensor<T>({1, d}, T(1)));
    n.bias = &ps.Add(name + ".bias", Tensor<T>({1, d}));
    return n;
  }

  Expr<T> operator()(Graph<T> &g, Expr<T> x) const {
    return LayerNormRows(x, g.Param(*gain), g.Param(*bias));
  }
};

/// Sinusoidal position table: rows are positions start..start+n-1,
/// entry (p, 2i) = sin(p / 10000^(2i/d)), (p, 2i+1) = cos(same).
template <typename T>
Tensor<T> PositionalEncoding(std::size_t n, std::size_t d, std::size_t start = 0) {
  if (d % 2 != 0) throw std::invalid_argument("positional encoding needs an even width");
  Tensor<T> pe({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    const double pos = static_cast<double>(start + r);
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      pe(r, 2 * i) = static_cast<T>(std::sin(angle));
      pe(r, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Expr<T> AddPosEnc(Graph<T> &g, Expr<T> x, std::size_t start_index) {
  return Add(x, g.Constant(PositionalEncoding<T>(x.rows(), x.cols(), start_index)));
}

/// Scaled dot-product attention with n_heads heads and output projection.
template <typename T>
struct MultiHeadAttention {
  Linear<T> query, key, value, output;
  std::size_t n_heads = 1;
  double dropout = 0.0;

  static MultiHeadAttention Create(ParameterSet<T> &ps, const std::string &name,
                                   const BlockConfig &cfg, Rng &rng) {
    MultiHeadAttention m;
    const std::size_t d = cfg.d_model;
    m.query = Linear<T>::Create(ps, name + ".q", d, d, rng);
    m.key = Linear<T>::Create(ps, name + ".k", d, d, rng);
    m.value = Linear<T>::Create(ps, name + ".v", d, d, rng);
    m.output = Linear<T>::Create(ps, name + ".o", d, d, rng);
    m.n_heads = cfg.n_heads;
    m.dropout = cfg.dropout;
    return m;
  }

  /// Attention over already projected queries/keys/values. When `weights`
  /// is non-null the per-head attention matrices are appended to it.
  Expr<T> Attend(Graph<T> &g, Expr<T> q, Expr<T> k, Expr<T> v, const AttentionMask *mask,
                 std::vector<Tensor<T>> *weights = nullptr) const {
    const std::size_t d = q.cols();
    const std::size_t dh = d / n_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    std::vector<Expr<T>> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
      Expr<T> qh = n_heads == 1 ? q : SliceCols(q, h * dh, dh);
      Expr<T> kh = n_heads == 1 ? k : SliceCols(k, h * dh, dh);
      Expr<T> vh = n_heads == 1 ? v : SliceCols(v, h * dh, dh);
      Expr<T> a = SoftmaxRows(Scale(MatMulNT(qh, kh), scale), mask);
      if (weights) weights->push_back(a.value());
      heads.push_back(MatMul(Dropout(a, dropout), vh));
    }
    return output(g, n_heads == 1 ? heads.front() : ConcatCols(heads));
  }

  Expr<T> operator()(Graph<T> &g, Expr<T> queries, Expr<T> keys, Expr<T> values,
                     const AttentionMask *mask = nullptr,
                     std::vector<Tensor<T>> *weights = nullptr) const {
    return Attend(g, query(g, queries), key(g, keys), value(g, values), mask, weights);
  }
};

/// Linear(d -> d_ffn) -> GELU -> Linear(d_ffn -> d), applied per position.
template <typename T>
struct PositionwiseFfn {
  Linear<T> in, out;

  static PositionwiseFfn Create(ParameterSet<T> &ps, const std::string &name,
                                const BlockConfig &cfg, Rng &rng) {
    return {Linear<T>::Create(ps, name + ".in", cfg.d_model, cfg.d_ffn, rng),
            Linear<T>::Create(ps, name + ".out", cfg.d_ffn, cfg.d_model, rng)};
  }

  Expr<T> operator()(Graph<T> &g, Expr<T> x) const { return out(g, Gelu(in(g, x))); }
};

/// a = softmax(v^T tanh(W c_n)) over the N rows, output = sum_n a_n c_n.
template <typename T>
struct AttentionPooling {
  Parameter<T> *proj = nullptr;    // d x d
  Parameter<T> *scorer = nullptr;  // d x 1

  static AttentionPooling Create(ParameterSet<T> &ps, const std::string &name, std::size_t d,
                                 Rng &rng) {
    AttentionPooling p;
    p.proj = &ps.Add(name + ".w", init::Xavier<T>(d, d, rng));
    p.scorer = &ps.Add(name + ".v", init::Xavier<T>(d, 1, rng));
    return p;
  }

  /// columns: N x d  ->  1 x d. `weights` receives the 1 x N pooling weights.
  Expr<T> operator()(Graph<T> &g, Expr<T> columns, Tensor<T> *weights = nullptr) const {
    if (columns.value().rank() != 2 || columns.rows() == 0)
      throw std::invalid_argument("attention pooling needs at least one vector");
    Expr<T> logits = MatMul(Tanh(MatMul(columns, g.Param(*proj))), g.Param(*scorer));
    Expr<T> a = SoftmaxRows(Transpose(logits));
    if (weights) *weights = a.value();
    return MatMul(a, columns);
  }
};

inline std::size_t SubsampledLength(std::size_t m) { return ((m + 1) / 2 + 1) / 2; }

/// Two (3x3 conv, ReLU, 2x2 max-pool) stages over the time/frequency plane,
/// then a per-frame linear map to d. Time shrinks to ceil(ceil(M/2)/2).
template <typename T>
struct ConvolutionPooling {
  Parameter<T> *conv1_w = nullptr, *conv1_b = nullptr;
  Parameter<T> *conv2_w = nullptr, *conv2_b = nullptr;
  Linear<T> proj;
  std::size_t feat_dim = 0;

  static ConvolutionPooling Create(ParameterSet<T> &ps, const std::string &name,
                                   std::size_t feat_dim, std::size_t channels1,
                                   std::size_t channels2, std::size_t d, Rng &rng) {
    ConvolutionPooling c;
    c.feat_dim = feat_dim;
    const double a1 = std::sqrt(6.0 / (9.0 * (1 + channels1)));
    const double a2 = std::sqrt(6.0 / (9.0 * (channels1 + channels2)));
    Tensor<T> w1({channels1, 1, 3, 3}), w2({channels2, channels1, 3, 3});
    for (auto &v : w1.data) v = static_cast<T>(rng.Uniform(-a1, a1));
    for (auto &v : w2.data) v = static_cast<T>(rng.Uniform(-a2, a2));
    c.conv1_w = &ps.Add(name + ".conv1.w", std::move(w1));
    c.conv1_b = &ps.Add(name + ".conv1.b", Tensor<T>({1, channels1}));
    c.conv2_w = &ps.Add(name + ".conv2.w", std::move(w2));
    c.conv2_b = &ps.Add(name + ".conv2.b", Tensor<T>({1, channels2}));
    c.proj = Linear<T>::Create(ps, name + ".proj", channels2 * SubsampledLength(feat_dim), d, rng);
    return c;
  }

  /// features: M x f (one frame per row)  ->  M' x d.
  Expr<T> operator()(Graph<T> &g, Expr<T> features) const {
    const auto &x = features.value();
    if (x.rank() != 2 || x.cols() != feat_dim)
      throw DimensionError("convolution pooling expects M x " + std::to_string(feat_dim) +
                           " features, got " + ShapeString(x.shape));
    if (x.rows() < 4)
      throw std::invalid_argument("convolution pooling needs at least 4 frames, got " +
                                  std::to_string(x.rows()));
    Expr<T> h = Reshape(features, {1, x.rows(), x.cols()});
    h = MaxPool2x2(Relu(Conv2D(h, g.Param(*conv1_w), g.Param(*conv1_b))));
    h = MaxPool2x2(Relu(Conv2D(h, g.Param(*conv2_w), g.Param(*conv2_b))));
    return proj(g, TimeMajorFlatten(h));
  }
};

/// Post-norm encoder block: LN(x + SelfAttn(x)), then LN(y + FFN(y)).
/// `memory` supplies keys/values (equal to the queries for full-sequence
/// use; a longer prefix when stepping one query at a time).
template <typename T>
struct EncoderBlock {
  MultiHeadAttention<T> attn;
  LayerNorm<T> norm1, norm2;
  PositionwiseFfn<T> ffn;
  double dropout = 0.0;

  static EncoderBlock Create(ParameterSet<T> &ps, const std::string &name,
                             const BlockConfig &cfg, Rng &rng) {
    EncoderBlock b;
    b.attn = MultiHeadAttention<T>::Create(ps, name + ".self", cfg, rng);
    b.norm1 = LayerNorm<T>::Create(ps, name + ".ln1", cfg.d_model);
    b.ffn = PositionwiseFfn<T>::Create(ps, name + ".ffn", cfg, rng);
    b.norm2 = LayerNorm<T>::Create(ps, name + ".ln2", cfg.d_model);
    b.dropout = cfg.dropout;
    return b;
  }

  Expr<T> Forward(Graph<T> &g, Expr<T> queries, Expr<T> memory,
                  const AttentionMask *mask) const {
    Expr<T> y = norm1(g, Add(queries, Dropout(attn(g, queries, memory, memory, mask), dropout)));
    return norm2(g, Add(y, Dropout(ffn(g, y), dropout)));
  }

  Expr<T> operator()(Graph<T> &g, Expr<T> x, const AttentionMask *mask = nullptr) const {
    return Forward(g, x, x, mask);
  }

  /// Causally masked variant over the row axis.
  Expr<T> Masked(Graph<T> &g, Expr<T> x) const {
    const AttentionMask causal = AttentionMask::Causal(x.rows());
    return Forward(g, x, x, &causal);
  }
};

/// Projected keys/values of one source memory for one decoder layer.
template <typename T>
struct ProjectedMemory {
  Tensor<T> keys;
  Tensor<T> values;
};

/// Decoder block: masked self-attention -> attention over the speech memory
/// -> attention over the context memory -> FFN; each sub-layer is residual
/// plus post layer norm. Blocks built without speech attention serve the
/// text-only language model.
template <typename T>
struct DecoderBlock {
  MultiHeadAttention<T> self_attn;
  std::optional<MultiHeadAttention<T>> speech_attn;
  MultiHeadAttention<T> context_attn;
  LayerNorm<T> norm_self, norm_speech, norm_context, norm_ffn;
  PositionwiseFfn<T> ffn;
  double dropout = 0.0;

  static DecoderBlock Create(ParameterSet<T> &ps, const std::string &name,
                             const BlockConfig &cfg, bool with_speech, Rng &rng) {
    DecoderBlock b;
    b.self_attn = MultiHeadAttention<T>::Create(ps, name + ".self", cfg, rng);
    b.norm_self = LayerNorm<T>::Create(ps, name + ".ln_self", cfg.d_model);
    if (with_speech) {
      b.speech_attn = MultiHeadAttention<T>::Create(ps, name + ".speech", cfg, rng);
      b.norm_speech = LayerNorm<T>::Create(ps, name + ".ln_speech", cfg.d_model);
    }
    b.context_attn = MultiHeadAttention<T>::Create(ps, name + ".context", cfg, rng);
    b.norm_context = LayerNorm<T>::Create(ps, name + ".ln_context", cfg.d_model);
    b.ffn = PositionwiseFfn<T>::Create(ps, name + ".ffn", cfg, rng);
    b.norm_ffn = LayerNorm<T>::Create(ps, name + ".ln_ffn", cfg.d_model);
    b.dropout = cfg.dropout;
    return b;
  }

  bool has_speech() const { return speech_attn.has_value(); }

  ProjectedMemory<T> ProjectSpeech(Graph<T> &g, Expr<T> speech) const {
    return {speech_attn->key(g, speech).value(), speech_attn->value(g, speech).value()};
  }
  ProjectedMemory<T> ProjectContext(Graph<T> &g, Expr<T> context) const {
    return {context_attn.key(g, context).value(), context_attn.value(g, context).value()};
  }

  /// Full-sequence form: x holds every prefix position, causal mask applied.
  Expr<T> operator()(Graph<T> &g, Expr<T> x, std::optional<Expr<T>> speech, Expr<T> context) const {
    const AttentionMask causal = AttentionMask::Causal(x.rows());
    Expr<T> y = norm_self(g, Add(x, Dropout(self_attn(g, x, x, x, &causal), dropout)));
    if (has_speech()) {
      if (!speech) throw std::invalid_argument("decoder block needs a speech memory");
      y = norm_speech(g, Add(y, Dropout((*speech_attn)(g, y, *speech, *speech), dropout)));
    }
    y = norm_context(g, Add(y, Dropout(context_attn(g, y, context, context), dropout)));
    return norm_ffn(g, Add(y, Dropout(ffn(g, y), dropout)));
  }

  /// Single-position form: `x` is the newest position (1 x d); its self
  /// key/value rows are appended to `self_keys`/`self_values`.
  Expr<T> Step(Graph<T> &g, Expr<T> x, Tensor<T> &self_keys, Tensor<T> &self_values,
               const ProjectedMemory<T> *speech, const ProjectedMemory<T> &context) const {
    auto append = [](Tensor<T> &cache, const Tensor<T> &row) {
      if (cache.empty()) {
        cache = row;
        return;
      }
      cache.data.insert(cache.data.end(), row.data.begin(), row.data.end());
      cache.shape[0] += 1;
    };
    append(self_keys, self_attn.key(g, x).value());
    append(self_values, self_attn.value(g, x).value());
    Expr<T> sa = self_attn.Attend(g, self_attn.query(g, x), g.Constant(self_keys),
                                  g.Constant(self_values), nullptr);
    Expr<T> y = norm_self(g, Add(x, sa));
    if (has_speech()) {
      if (!speech) throw std::invalid_argument("decoder block needs a speech memory");
      Expr<T> s = speech_attn->Attend(g, speech_attn->query(g, y), g.Constant(speech->keys),
                                      g.Constant(speech->values), nullptr);
      y = norm_speech(g, Add(y, s));
    }
    Expr<T> c = context_attn.Attend(g, context_attn.query(g, y), g.Constant(context.keys),
                                    g.Constant(context.values), nullptr);
    y = norm_context(g, Add(y, c));
    return norm_ffn(g, Add(y, ffn(g, y)));
  }
};

}  // namespace dsq

#endif  // DSQ_BLOCKS_HPP_
