// dsq/training.hpp

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

#ifndef DSQ_TRAINING_HPP_
#define DSQ_TRAINING_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsq/corpus.hpp"
#include "dsq/models.hpp"
#include "dsq/optimizer.hpp"

namespace dsq {

enum class Smoothing { kNone, kLabel, kKd, kKdContextFree };

/// Whether utterance t is conditioned on utterances < t (hierarchical) or on
/// the sentinel only (utterance-level ablation).
enum class ContextMode { kHierarchical, kNone };

struct SpecAugmentConfig {
  bool enabled = true;
  std::size_t n_freq_masks = 2;
  std::size_t max_freq_width = 20;
  std::size_t n_time_masks = 2;
  std::size_t max_time_width = 100;
};

struct TrainingConfig {
  Smoothing smoothing = Smoothing::kNone;
  double alpha = 0.5;
  double label_eps = 0.1;
  std::size_t batch_size = 4;
  std::size_t max_utterances = 50;
  double lr = 1e-3;
  std::uint64_t warmup = 200;
  RAdamConfig radam;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  SpecAugmentConfig specaug;
  std::size_t patience = 3;
  std::size_t max_epochs = 50;
  std::uint64_t max_steps = 0;  // 0 = no step cap
  ContextMode context = ContextMode::kHierarchical;

  void Validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0, 1]");
    if (label_eps < 0.0 || label_eps >= 1.0) throw std::invalid_argument("label_eps must be in [0, 1)");
    if (batch_size == 0 || max_utterances == 0 || max_epochs == 0)
      throw std::invalid_argument("batch_size, max_utterances and max_epochs must be positive");
    if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
  }
};

// ---------------------------------------------------------------- targets

/// One row per token, 1 at the token id. PAD tokens give an all-zero row.
template <typename T>
Tensor<T> OneHotTargets(const std::vector<int> &tokens, std::size_t vocab_size) {
  Tensor<T> t({tokens.size(), vocab_size});
  for (std::size_t n = 0; n < tokens.size(); ++n)
    if (tokens[n] != Vocabulary::kPad) t(n, static_cast<std::size_t>(tokens[n])) = T(1);
  return t;
}

/// (1 - alpha) * onehot + alpha * teacher. Teacher rows are renormalized
/// in T first: cached teachers are 32-bit and only sum to 1 to ~1e-7.
template <typename T>
Tensor<T> SmoothTargetsKd(const Tensor<T> &onehot, const Tensor<T> &teacher, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0, 1]");
  if (onehot.shape != teacher.shape)
    throw DimensionError("teacher " + ShapeString(teacher.shape) + " vs targets " +
                         ShapeString(onehot.shape));
  Tensor<T> out = onehot;
  const T a = static_cast<T>(alpha);
  for (std::size_t n = 0; n < out.rows(); ++n) {
    T sum = 0;
    for (T v : teacher.row(n)) {
      if (!(v >= T(0))) throw std::invalid_argument("teacher probabilities must be non-negative");
      sum += v;
    }
    if (!(sum > T(0))) throw std::invalid_argument("teacher row has no probability mass");
    for (std::size_t v = 0; v < out.cols(); ++v)
      out(n, v) = (T(1) - a) * onehot(n, v) + a * (teacher(n, v) / sum);
  }
  return out;
}

/// Uniform distribution over every id except PAD, one row per target row.
template <typename T>
Tensor<T> UniformTargets(std::size_t rows, std::size_t vocab_size) {
  Tensor<T> u({rows, vocab_size}, T(1) / T(vocab_size - 1));
  for (std::size_t n = 0; n < rows; ++n) u(n, Vocabulary::kPad) = T(0);
  return u;
}

/// (1 - eps) * onehot + eps * uniform over non-PAD ids.
template <typename T>
Tensor<T> SmoothTargetsLabel(const Tensor<T> &onehot, double eps) {
  if (eps < 0.0 || eps >= 1.0) throw std::invalid_argument("label_eps must be in [0, 1)");
  return SmoothTargetsKd(onehot, UniformTargets<T>(onehot.rows(), onehot.cols()), eps);
}

/// -sum targets * log(max(probs, 1e-12)) over a whole matrix of stepwise
/// distributions.
template <typename T>
double NllLoss(const Tensor<T> &probs, const Tensor<T> &targets) {
  if (probs.shape != targets.shape)
    throw DimensionError("NllLoss: " + ShapeString(probs.shape) + " vs " + ShapeString(targets.shape));
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (targets.data[i] != T(0))
      loss -= static_cast<double>(targets.data[i]) * std::log(std::max<double>(probs.data[i], 1e-12));
  return loss;
}

// ---------------------------------------------------------------- augmentation

/// Zeroes n_freq_masks column bands and n_time_masks row bands of an M x f
/// feature matrix. Widths are uniform in [0, max width] and clipped to the
/// matrix.
template <typename T>
Tensor<T> SpecAugment(const Tensor<T> &x, const SpecAugmentConfig &cfg, Rng &rng) {
  Tensor<T> y = x;
  if (!cfg.enabled) return y;
  const long frames = static_cast<long>(x.rows());
  const long bins = static_cast<long>(x.cols());
  for (std::size_t k = 0; k < cfg.n_freq_masks; ++k) {
    const long w = std::min(rng.UniformInt(0, static_cast<long>(cfg.max_freq_width)), bins);
    const long f0 = rng.UniformInt(0, bins - w);
    for (long m = 0; m < frames; ++m)
      for (long j = f0; j < f0 + w; ++j) y(m, j) = T(0);
  }
  for (std::size_t k = 0; k < cfg.n_time_masks; ++k) {
    const long w = std::min(rng.UniformInt(0, static_cast<long>(cfg.max_time_width)), frames);
    const long t0 = rng.UniformInt(0, frames - w);
    for (long m = t0; m < t0 + w; ++m)
      for (long j = 0; j < bins; ++j) y(m, j) = T(0);
  }
  return y;
}

// ---------------------------------------------------------------- segment forward

/// Context memory for each utterance of a segment under teacher forcing:
/// the sentinel for the first utterance (or for all of them in kNone), else
/// Z^(L) rows of the preceding reference utterances.
template <typename T>
std::vector<Expr<T>> SegmentContextMemories(Graph<T> &g, const ContextEncoder<T> &henc,
                                            std::span<const std::vector<int>> texts,
                                            ContextMode mode) {
  std::vector<Expr<T>> memories;
  Expr<T> sentinel = henc.Sentinel(g);
  if (mode == ContextMode::kNone || texts.size() <= 1) {
    memories.assign(texts.size(), sentinel);
    return memories;
  }
  std::vector<Expr<T>> rows;
  for (std::size_t t = 0; t + 1 < texts.size(); ++t) rows.push_back(henc.EncodeUtterance(g, texts[t]));
  Expr<T> z = henc.UtteranceStates(g, ConcatRows(rows), 0);
  memories.push_back(sentinel);
  for (std::size_t t = 1; t < texts.size(); ++t) memories.push_back(SliceRows(z, 0, t));
  return memories;
}

/// Teacher-forced log-distributions of every utterance in a segment.
/// `texts[t]` are reference ids ending in EOS.
template <typename T>
std::vector<Expr<T>> AsrSegmentLogProbs(Graph<T> &g, const AsrModel<T> &model,
                                        std::span<const Tensor<T>> features,
                                        std::span<const std::vector<int>> texts,
                                        ContextMode mode) {
  auto memories = SegmentContextMemories(g, model.context_encoder(), texts, mode);
  std::vector<Expr<T>> out;
  for (std::size_t t = 0; t < texts.size(); ++t) {
    Expr<T> speech = model.speech_encoder().Encode(g, features[t]);
    out.push_back(model.decoder().TeacherForced(g, texts[t], speech, memories[t]));
  }
  return out;
}

template <typename T>
std::vector<Expr<T>> LmSegmentLogProbs(Graph<T> &g, const LanguageModel<T> &model,
                                       std::span<const std::vector<int>> texts, ContextMode mode) {
  auto memories = SegmentContextMemories(g, model.context_encoder(), texts, mode);
  std::vector<Expr<T>> out;
  for (std::size_t t = 0; t < texts.size(); ++t)
    out.push_back(model.decoder().TeacherForced(g, texts[t], std::nullopt, memories[t]));
  return out;
}

// ---------------------------------------------------------------- teacher cache

/// Teacher next-token distributions for every token position (EOS
/// included) of every utterance, keyed by lecture id.
struct TeacherCache {
  std::uint64_t vocab_hash = 0;
  std::size_t vocab_size = 0;
  bool context_free = false;
  std::map<std::string, std::vector<Tensor<float>>> lectures;  // [utt] -> N x V
};

/// Teacher and student must use the identical vocabulary file.
inline void CheckTeacherVocabulary(const TeacherCache &cache, const Vocabulary &vocab) {
  if (cache.vocab_hash != vocab.Hash() || cache.vocab_size != vocab.size())
    throw std::invalid_argument("teacher vocabulary does not match the student vocabulary");
}

/// Runs the language model over reference texts (eval mode) with reference
/// preceding utterances as context, restarting context every max_utterances.
template <typename T>
TeacherCache ComputeTeacherDistributions(const LanguageModel<T> &lm,
                                         const std::vector<DiscourseSample> &split,
                                         const Vocabulary &vocab, std::size_t max_utterances,
                                         ContextMode mode) {
  if (lm.config().vocab_size != vocab.size())
    throw std::invalid_argument("teacher vocabulary size differs from the corpus vocabulary");
  TeacherCache cache;
  cache.vocab_hash = vocab.Hash();
  cache.vocab_size = vocab.size();
  cache.context_free = mode == ContextMode::kNone;
  const auto &henc = lm.context_encoder();
  for (const auto &seg : MakeSegments(split, max_utterances)) {
    const auto &d = split[seg.discourse];
    auto &dest = cache.lectures[d.id];
    dest.resize(d.utterances.size());
    ContextCache<T> ctx;
    ctx.start_index = 0;
    for (std::size_t u = seg.begin; u < seg.end; ++u) {
      std::vector<int> ids = vocab.Encode(d.utterances[u].text);
      ids.push_back(Vocabulary::kEos);
      Graph<T> g;
      const Tensor<T> memory = mode == ContextMode::kNone ? henc.sentinel() : henc.Memory(ctx);
      Expr<T> lp = lm.decoder().TeacherForced(g, ids, std::nullopt, g.Constant(memory));
      Tensor<float> probs({lp.rows(), lp.cols()});
      for (std::size_t i = 0; i < probs.size(); ++i)
        probs.data[i] = static_cast<float>(std::exp(lp.value().data[i]));
      dest[u] = std::move(probs);
      if (mode == ContextMode::kHierarchical) henc.Append(ctx, ids);
    }
  }
  return cache;
}

// ---------------------------------------------------------------- training loop

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per token, smoothed targets
  double valid_loss = 0.0;  // mean per token, ground-truth targets
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  double best_valid_loss = 0.0;
  std::size_t best_epoch = 0;
  std::uint64_t steps = 0;
  bool early_stopped = false;
};

/// Tokenized, normalized view of a split used by the trainers.
template <typename T>
struct PreparedSplit {
  std::vector<Segment> segments;
  std::vector<std::vector<std::vector<int>>> texts;   // [discourse][utt], EOS-terminated
  std::vector<std::vector<Tensor<T>>> features;       // [discourse][utt], normalized
  std::vector<std::string> ids;

  static PreparedSplit Make(const std::vector<DiscourseSample> &split, const Vocabulary &vocab,
                            const FeatureStats<T> *stats, std::size_t max_utterances,
                            bool deltas = false) {
    PreparedSplit p;
    p.segments = MakeSegments(split, max_utterances);
    for (const auto &d : split) {
      d.Validate();
      p.ids.push_back(d.id);
      auto &tx = p.texts.emplace_back();
      auto &fx = p.features.emplace_back();
      for (const auto &u : d.utterances) {
        tx.push_back(vocab.Encode(u.text));
        tx.back().push_back(Vocabulary::kEos);
        if (!stats) continue;
        Tensor<T> x = u.features.template cast<T>();
        fx.push_back(stats->Normalize(deltas ? AddDeltas(x) : x));
      }
    }
    return p;
  }

  std::size_t Tokens(const Segment &s) const {
    std::size_t n = 0;
    for (std::size_t u = s.begin; u < s.end; ++u) n += texts[s.discourse][u].size();
    return n;
  }
};

namespace detail {

/// Shared optimisation loop. `segment_loss(g, segment_index, epoch)` builds
/// the summed loss of one training segment; `valid_loss()` returns the mean
/// per-token validation loss in eval mode.
template <typename T>
TrainResult RunTraining(
    ParameterSet<T> &params, const std::vector<std::size_t> &segment_tokens,
    const std::function<Expr<T>(Graph<T> &, std::size_t, std::size_t)> &segment_loss,
    const std::function<double()> &valid_loss, const TrainingConfig &cfg,
    RAdam<T> &optimizer, const std::function<void(const EpochMetrics &)> &on_epoch) {
  cfg.Validate();
  if (segment_tokens.empty()) throw std::invalid_argument("training corpus is empty");
  TrainResult result;
  ParameterSet<T> best = params;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(segment_tokens.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  bool out_of_steps = false;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !out_of_steps; ++epoch) {
    Rng shuffle = Rng::Keyed(cfg.seed, 0x5EED, epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.UniformInt(0, static_cast<long>(i) - 1))]);
    double loss_sum = 0.0;
    std::size_t token_sum = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      std::size_t batch_tokens = 0;
      for (std::size_t k = b; k < e; ++k) batch_tokens += segment_tokens[order[k]];
      params.ZeroGrad();
      for (std::size_t k = b; k < e; ++k) {
        Graph<T> g(/*training=*/true, Rng::Keyed(cfg.seed, epoch, order[k]).NextU64());
        Expr<T> loss = segment_loss(g, order[k], epoch);
        loss_sum += loss.value().data[0];
        g.Backward(Scale(loss, T(1) / static_cast<T>(batch_tokens)));
      }
      token_sum += batch_tokens;
      ClipGradNorm(params, cfg.clip_norm);
      optimizer.Step(params, NoamRate(cfg.lr, optimizer.step() + 1, cfg.warmup));
      ++result.steps;
      if (cfg.max_steps && result.steps >= cfg.max_steps) {
        out_of_steps = true;
        break;
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(token_sum, 1));
    m.valid_loss = valid_loss();
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
    if (m.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = m.valid_loss;
      result.best_epoch = epoch;
      best.CopyValuesFrom(params);
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  params.CopyValuesFrom(best);
  return result;
}

}  // namespace detail

/// Mean per-token ML loss of an ASR model on a prepared split (eval mode).
template <typename T>
double AsrEvalLoss(const AsrModel<T> &model, const PreparedSplit<T> &split, ContextMode mode) {
  double loss = 0.0;
  std::size_t tokens = 0;
  for (const auto &s : split.segments) {
    Graph<T> g;
    std::span<const Tensor<T>> f(split.features[s.discourse].data() + s.begin, s.size());
    std::span<const std::vector<int>> tx(split.texts[s.discourse].data() + s.begin, s.size());
    auto lps = AsrSegmentLogProbs(g, model, f, tx, mode);
    for (std::size_t t = 0; t < lps.size(); ++t)
      loss += SoftTargetNll(lps[t], OneHotTargets<T>(tx[t], model.config().vocab_size)).value().data[0];
    tokens += split.Tokens(s);
  }
  return loss / static_cast<double>(std::max<std::size_t>(tokens, 1));
}

template <typename T>
double LmEvalLoss(const LanguageModel<T> &model, const PreparedSplit<T> &split, ContextMode mode) {
  double loss = 0.0;
  std::size_t tokens = 0;
  for (const auto &s : split.segments) {
    Graph<T> g;
    std::span<const std::vector<int>> tx(split.texts[s.discourse].data() + s.begin, s.size());
    auto lps = LmSegmentLogProbs(g, model, tx, mode);
    for (std::size_t t = 0; t < lps.size(); ++t)
      loss += SoftTargetNll(lps[t], OneHotTargets<T>(tx[t], model.config().vocab_size)).value().data[0];
    tokens += split.Tokens(s);
  }
  return loss / static_cast<double>(std::max<std::size_t>(tokens, 1));
}

/// Teacher-forced greedy token accuracy (argmax of every stepwise
/// distribution against the reference, EOS included).
template <typename T>
double AsrTeacherForcedAccuracy(const AsrModel<T> &model, const PreparedSplit<T> &split,
                                ContextMode mode) {
  std::size_t right = 0, total = 0;
  for (const auto &s : split.segments) {
    Graph<T> g;
    std::span<const Tensor<T>> f(split.features[s.discourse].data() + s.begin, s.size());
    std::span<const std::vector<int>> tx(split.texts[s.discourse].data() + s.begin, s.size());
    auto lps = AsrSegmentLogProbs(g, model, f, tx, mode);
    for (std::size_t t = 0; t < lps.size(); ++t) {
      const auto &lp = lps[t].value();
      for (std::size_t n = 0; n < lp.rows(); ++n) {
        auto row = lp.row(n);
        const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        right += best == tx[t][n];
        ++total;
      }
    }
  }
  return static_cast<double>(right) / static_cast<double>(std::max<std::size_t>(total, 1));
}

/// Per-utterance training targets under the configured smoothing.
template <typename T>
std::vector<std::vector<Tensor<T>>> BuildTargets(const PreparedSplit<T> &split, std::size_t vocab_size,
                                                 const TrainingConfig &cfg,
                                                 const TeacherCache *teacher) {
  const bool kd = cfg.smoothing == Smoothing::kKd || cfg.smoothing == Smoothing::kKdContextFree;
  if (kd && !teacher) throw std::invalid_argument("knowledge distillation needs a teacher cache");
  if (kd && teacher->vocab_size != vocab_size)
    throw std::invalid_argument("teacher vocabulary size differs from the student's");
  std::vector<std::vector<Tensor<T>>> out(split.texts.size());
  for (std::size_t d = 0; d < split.texts.size(); ++d)
    for (std::size_t u = 0; u < split.texts[d].size(); ++u) {
      Tensor<T> onehot = OneHotTargets<T>(split.texts[d][u], vocab_size);
      switch (cfg.smoothing) {
        case Smoothing::kNone:
          out[d].push_back(std::move(onehot));
          break;
        case Smoothing::kLabel:
          out[d].push_back(SmoothTargetsLabel(onehot, cfg.label_eps));
          break;
        case Smoothing::kKd:
        case Smoothing::kKdContextFree: {
          auto it = teacher->lectures.find(split.ids[d]);
          if (it == teacher->lectures.end() || it->second.size() <= u || it->second[u].empty())
            throw std::invalid_argument("teacher cache lacks lecture " + split.ids[d]);
          out[d].push_back(SmoothTargetsKd(onehot, it->second[u].template cast<T>(), cfg.alpha));
          break;
        }
      }
    }
  return out;
}

/// Trains the ASR model on `train`, early-stopping on `valid`.
template <typename T>
TrainResult TrainAsr(AsrModel<T> &model, const PreparedSplit<T> &train, const PreparedSplit<T> &valid,
                     const TrainingConfig &cfg, const TeacherCache *teacher, RAdam<T> &optimizer,
                     const std::function<void(const EpochMetrics &)> &on_epoch = {}) {
  cfg.Validate();
  const auto targets = BuildTargets(train, model.config().vocab_size, cfg, teacher);
  std::vector<std::size_t> seg_tokens;
  for (const auto &s : train.segments) seg_tokens.push_back(train.Tokens(s));
  auto seg_loss = [&](Graph<T> &g, std::size_t idx, std::size_t epoch) {
    const Segment &s = train.segments[idx];
    std::vector<Tensor<T>> feats;
    for (std::size_t u = s.begin; u < s.end; ++u) {
      Rng rng = Rng::Keyed(cfg.seed ^ 0x5BEC, epoch, (s.discourse << 20) | u);
      feats.push_back(SpecAugment(train.features[s.discourse][u], cfg.specaug, rng));
    }
    std::span<const std::vector<int>> tx(train.texts[s.discourse].data() + s.begin, s.size());
    auto lps = AsrSegmentLogProbs<T>(g, model, feats, tx, cfg.context);
    std::vector<Expr<T>> losses;
    for (std::size_t t = 0; t < lps.size(); ++t)
      losses.push_back(SoftTargetNll(lps[t], targets[s.discourse][s.begin + t]));
    Expr<T> total = losses.front();
    for (std::size_t t = 1; t < losses.size(); ++t) total = Add(total, losses[t]);
    return total;
  };
  auto valid_loss = [&]() { return AsrEvalLoss(model, valid, cfg.context); };
  return detail::RunTraining<T>(model.params(), seg_tokens, seg_loss, valid_loss, cfg, optimizer,
                                on_epoch);
}

/// Trains the language model with plain ML targets; valid_loss of each epoch
/// is the log validation perplexity.
template <typename T>
TrainResult TrainLm(LanguageModel<T> &model, const PreparedSplit<T> &train,
                    const PreparedSplit<T> &valid, const TrainingConfig &cfg, RAdam<T> &optimizer,
                    const std::function<void(const EpochMetrics &)> &on_epoch = {}) {
  cfg.Validate();
  std::vector<std::size_t> seg_tokens;
  for (const auto &s : train.segments) seg_tokens.push_back(train.Tokens(s));
  auto seg_loss = [&](Graph<T> &g, std::size_t idx, std::size_t) {
    const Segment &s = train.segments[idx];
    std::span<const std::vector<int>> tx(train.texts[s.discourse].data() + s.begin, s.size());
    auto lps = LmSegmentLogProbs<T>(g, model, tx, cfg.context);
    std::vector<Expr<T>> losses;
    for (std::size_t t = 0; t < lps.size(); ++t)
      losses.push_back(SoftTargetNll(lps[t], OneHotTargets<T>(tx[t], model.config().vocab_size)));
    Expr<T> total = losses.front();
    for (std::size_t t = 1; t < losses.size(); ++t) total = Add(total, losses[t]);
    return total;
  };
  auto valid_loss = [&]() { return LmEvalLoss(model, valid, cfg.context); };
  return detail::RunTraining<T>(model.params(), seg_tokens, seg_loss, valid_loss, cfg, optimizer,
                                on_epoch);
}

}  // namespace dsq

#endif  // DSQ_TRAINING_HPP_
