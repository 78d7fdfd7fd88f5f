// dsq/corpus.hpp

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

#ifndef DSQ_CORPUS_HPP_
#define DSQ_CORPUS_HPP_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsq/rng.hpp"
#include "dsq/tensor.hpp"
#include "dsq/vocabulary.hpp"

namespace dsq {

/// One speech/text pair: M x f frames (one frame per row) and its transcript.
struct Utterance {
  Tensor<float> features;
  std::string text;
};

/// Ordered utterances of one lecture or conversation.
struct DiscourseSample {
  std::string id;
  std::vector<Utterance> utterances;

  void Validate() const {
    if (utterances.empty()) throw std::invalid_argument("discourse " + id + " has no utterances");
    for (const auto &u : utterances) {
      if (u.features.rank() != 2 || u.features.rows() < 4)
        throw std::invalid_argument("discourse " + id + ": every utterance needs >= 4 frames");
      if (u.text.empty()) throw std::invalid_argument("discourse " + id + ": empty transcript");
    }
  }
};

/// A window of at most max_utterances consecutive utterances; context and
/// utterance positions restart at each window.
struct Segment {
  std::size_t discourse = 0;  // index into the split
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

inline std::vector<Segment> MakeSegments(const std::vector<DiscourseSample> &split,
                                         std::size_t max_utterances) {
  if (max_utterances == 0) throw std::invalid_argument("max_utterances must be positive");
  std::vector<Segment> out;
  for (std::size_t d = 0; d < split.size(); ++d)
    for (std::size_t b = 0; b < split[d].utterances.size(); b += max_utterances)
      out.push_back({d, b, std::min(b + max_utterances, split[d].utterances.size())});
  return out;
}

inline std::vector<std::string> AllTexts(const std::vector<DiscourseSample> &split) {
  std::vector<std::string> t;
  for (const auto &d : split)
    for (const auto &u : d.utterances) t.push_back(u.text);
  return t;
}

inline std::size_t CountUtterances(const std::vector<DiscourseSample> &split) {
  std::size_t n = 0;
  for (const auto &d : split) n += d.utterances.size();
  return n;
}

struct SynthTaskConfig {
  std::size_t vocab_size = 10;  // plain (never confusable) characters
  std::size_t utterances = 6;   // per discourse
  std::size_t tokens = 5;       // per utterance
  std::size_t n_topics = 4;
  std::size_t n_groups = 3;     // confusable sets, one member per topic
  double ambiguity_rate = 0.3;
  double noise = 0.3;           // per-frame Gaussian noise
  std::size_t feat_dim = 16;
  std::size_t frames_per_token = 4;
  std::size_t n_train = 200;
  std::size_t n_valid = 20;
  std::size_t n_test = 40;
  std::uint64_t seed = 1;

  void Validate() const {
    if (vocab_size == 0 || utterances == 0 || tokens < 2 || n_topics == 0 || n_groups == 0 ||
        feat_dim == 0 || frames_per_token == 0)
      throw std::invalid_argument("synthetic task sizes must be positive (tokens >= 2)");
    if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0)
      throw std::invalid_argument("ambiguity_rate must be in [0, 1]");
    if (noise < 0.0) throw std::invalid_argument("noise must be >= 0");
    if (tokens * frames_per_token < 4) throw std::invalid_argument("utterances need >= 4 frames");
  }
};

/// Character inventory of the synthetic task and the acoustic unit each
/// character is rendered with. Members of a confusable group share one unit.
struct SynthLexicon {
  std::vector<std::string> plain;
  std::vector<std::string> markers;              // one per topic
  std::vector<std::vector<std::string>> groups;  // groups[g][topic]
  std::map<std::string, std::size_t> unit_of;
  std::vector<std::vector<float>> units;         // unit -> feat_dim mean vector

  static SynthLexicon Build(const SynthTaskConfig &cfg) {
    static const std::string kPlain = "abcdefghijklmnopqrstuvwxyz";
    static const std::string kMarkers = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    static const std::string kMembers = "0123456789!#$%&*+=?@^~<>;:";
    if (cfg.vocab_size > kPlain.size() || cfg.n_topics > kMarkers.size() ||
        cfg.n_groups * cfg.n_topics > kMembers.size())
      throw std::invalid_argument("synthetic inventory too large for the built-in alphabet");
    SynthLexicon lx;
    Rng rng = Rng::Keyed(cfg.seed, 0x1E71C0);
    auto new_unit = [&]() {
      std::vector<float> u(cfg.feat_dim);
      for (auto &v : u) v = static_cast<float>(rng.Normal());
      lx.units.push_back(std::move(u));
      return lx.units.size() - 1;
    };
    for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
      lx.plain.emplace_back(1, kPlain[i]);
      lx.unit_of[lx.plain.back()] = new_unit();
    }
    for (std::size_t k = 0; k < cfg.n_topics; ++k) {
      lx.markers.emplace_back(1, kMarkers[k]);
      lx.unit_of[lx.markers.back()] = new_unit();
    }
    for (std::size_t g = 0; g < cfg.n_groups; ++g) {
      const std::size_t unit = new_unit();
      lx.groups.emplace_back();
      for (std::size_t k = 0; k < cfg.n_topics; ++k) {
        lx.groups.back().emplace_back(1, kMembers[g * cfg.n_topics + k]);
        lx.unit_of[lx.groups.back().back()] = unit;
      }
    }
    return lx;
  }
};

struct SyntheticCorpus {
  SynthLexicon lexicon;
  std::vector<DiscourseSample> train, valid, test;
};

/// Each discourse draws a topic. Its first utterance opens with the topic
/// marker; in later utterances every token is, with probability
/// ambiguity_rate, the topic's member of a random confusable group (whose
/// frames are indistinguishable from the other members'), otherwise a plain
/// character. Every token is rendered as frames_per_token noisy frames of its
/// unit vector.
inline SyntheticCorpus GenerateSyntheticCorpus(const SynthTaskConfig &cfg) {
  cfg.Validate();
  SyntheticCorpus corpus;
  corpus.lexicon = SynthLexicon::Build(cfg);
  const auto &lx = corpus.lexicon;
  auto make = [&](const std::string &split, std::size_t count, std::uint64_t stream) {
    std::vector<DiscourseSample> out;
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng = Rng::Keyed(cfg.seed, stream, i);
      DiscourseSample d;
      d.id = split + "_" + std::to_string(i);
      const auto topic = static_cast<std::size_t>(rng.UniformInt(0, static_cast<long>(cfg.n_topics) - 1));
      for (std::size_t t = 0; t < cfg.utterances; ++t) {
        std::vector<std::string> chars;
        for (std::size_t n = 0; n < cfg.tokens; ++n) {
          if (t == 0 && n == 0) {
            chars.push_back(lx.markers[topic]);
          } else if (t > 0 && rng.Bernoulli(cfg.ambiguity_rate)) {
            const auto g = static_cast<std::size_t>(rng.UniformInt(0, static_cast<long>(cfg.n_groups) - 1));
            chars.push_back(lx.groups[g][topic]);
          } else {
            chars.push_back(lx.plain[static_cast<std::size_t>(
                rng.UniformInt(0, static_cast<long>(cfg.vocab_size) - 1))]);
          }
        }
        Utterance u;
        u.features = Tensor<float>({chars.size() * cfg.frames_per_token, cfg.feat_dim});
        for (std::size_t n = 0; n < chars.size(); ++n) {
          u.text += chars[n];
          const auto &unit = lx.units[lx.unit_of.at(chars[n])];
          for (std::size_t r = 0; r < cfg.frames_per_token; ++r)
            for (std::size_t j = 0; j < cfg.feat_dim; ++j)
              u.features(n * cfg.frames_per_token + r, j) =
                  unit[j] + static_cast<float>(cfg.noise * rng.Normal());
        }
        d.utterances.push_back(std::move(u));
      }
      out.push_back(std::move(d));
    }
    return out;
  };
  corpus.train = make("train", cfg.n_train, 1);
  corpus.valid = make("valid", cfg.n_valid, 2);
  corpus.test = make("test", cfg.n_test, 3);
  return corpus;
}

}  // namespace dsq

#endif  // DSQ_CORPUS_HPP_
