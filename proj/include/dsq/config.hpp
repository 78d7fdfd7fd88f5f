// dsq/config.hpp

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

#ifndef DSQ_CONFIG_HPP_
#define DSQ_CONFIG_HPP_

// Run configuration: flat "dotted.key = value" lines, '#' starts a comment.
// Every key has a default; unknown keys and malformed values are rejected.
// The top-level `seed` drives data generation, initialisation and training,
// and the DSQ_SEED environment variable overrides it.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsq/corpus.hpp"
#include "dsq/decoding.hpp"
#include "dsq/gradcheck.hpp"
#include "dsq/model_config.hpp"
#include "dsq/training.hpp"

namespace dsq {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RunConfig {
 public:
  enum class Kind { kInt, kReal, kBool, kChoice };

  struct Key {
    std::string name;
    Kind kind;
    std::string value;
    std::vector<std::string> choices;
  };

  RunConfig() {
    for (const auto &k : Schema()) values_[k.name] = k.value;
  }

  /// Desk-scale defaults; every key of the format is listed here.
  static const std::vector<Key> &Schema() {
    static const std::vector<Key> schema = {
        {"seed", Kind::kInt, "1", {}},
        {"data.vocab_size", Kind::kInt, "10", {}},
        {"data.utterances", Kind::kInt, "6", {}},
        {"data.tokens", Kind::kInt, "5", {}},
        {"data.n_topics", Kind::kInt, "4", {}},
        {"data.n_groups", Kind::kInt, "3", {}},
        {"data.ambiguity_rate", Kind::kReal, "0.3", {}},
        {"data.noise", Kind::kReal, "0.3", {}},
        {"data.feat_dim", Kind::kInt, "16", {}},
        {"data.frames_per_token", Kind::kInt, "4", {}},
        {"data.n_train", Kind::kInt, "200", {}},
        {"data.n_valid", Kind::kInt, "20", {}},
        {"data.n_test", Kind::kInt, "40", {}},
        {"features.deltas", Kind::kBool, "false", {}},
        {"model.d_model", Kind::kInt, "32", {}},
        {"model.n_heads", Kind::kInt, "4", {}},
        {"model.d_ffn", Kind::kInt, "64", {}},
        {"model.dropout", Kind::kReal, "0.1", {}},
        {"model.token_blocks", Kind::kInt, "1", {}},
        {"model.utterance_blocks", Kind::kInt, "1", {}},
        {"model.speech_blocks", Kind::kInt, "1", {}},
        {"model.decoder_blocks", Kind::kInt, "1", {}},
        {"model.conv_channels1", Kind::kInt, "4", {}},
        {"model.conv_channels2", Kind::kInt, "4", {}},
        {"model.precision", Kind::kChoice, "float", {"float", "double"}},
        {"train.smoothing", Kind::kChoice, "none", {"none", "label", "kd", "kd-context-free"}},
        {"train.alpha", Kind::kReal, "0.5", {}},
        {"train.label_eps", Kind::kReal, "0.1", {}},
        {"train.batch_size", Kind::kInt, "4", {}},
        {"train.max_utterances", Kind::kInt, "50", {}},
        {"train.lr", Kind::kReal, "0.003", {}},
        {"train.warmup", Kind::kInt, "200", {}},
        {"train.clip_norm", Kind::kReal, "5.0", {}},
        {"train.patience", Kind::kInt, "3", {}},
        {"train.max_epochs", Kind::kInt, "20", {}},
        {"train.max_steps", Kind::kInt, "0", {}},
        {"train.context", Kind::kChoice, "hierarchical", {"hierarchical", "none"}},
        {"train.radam.beta1", Kind::kReal, "0.9", {}},
        {"train.radam.beta2", Kind::kReal, "0.999", {}},
        {"train.radam.eps", Kind::kReal, "1e-8", {}},
        {"train.specaug.enabled", Kind::kBool, "true", {}},
        {"train.specaug.n_freq_masks", Kind::kInt, "2", {}},
        {"train.specaug.max_freq_width", Kind::kInt, "2", {}},
        {"train.specaug.n_time_masks", Kind::kInt, "2", {}},
        {"train.specaug.max_time_width", Kind::kInt, "2", {}},
        {"decode.beam_size", Kind::kInt, "4", {}},
        {"decode.max_len", Kind::kInt, "100", {}},
        {"decode.length_norm", Kind::kBool, "false", {}},
        {"decode.context", Kind::kChoice, "hypothesis", {"hypothesis", "oracle", "none"}},
        {"decode.segment_length", Kind::kInt, "50", {}},
        {"gradcheck.step", Kind::kReal, "1e-5", {}},
        {"gradcheck.tolerance", Kind::kReal, "1e-4", {}},
        {"gradcheck.max_entries", Kind::kInt, "24", {}},
    };
    return schema;
  }

  static const Key &Lookup(const std::string &name) {
    for (const auto &k : Schema())
      if (k.name == name) return k;
    throw ConfigError("unknown config key '" + name + "'");
  }

  void Set(const std::string &name, const std::string &value) {
    const Key &k = Lookup(name);
    Check(k, value);
    values_[name] = value;
  }

  /// "key=value" as given on the command line.
  void SetAssignment(const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    Set(Trim(assignment.substr(0, eq)), Trim(assignment.substr(eq + 1)));
  }

  void Parse(const std::string &text, const std::string &origin = "<config>") {
    std::istringstream in(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = Trim(line);
      if (line.empty()) continue;
      try {
        SetAssignment(line);
      } catch (const ConfigError &e) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void LoadFile(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    Parse(ss.str(), path);
  }

  void ApplyEnvironment() {
    if (const char *s = std::getenv("DSQ_SEED"); s && *s) Set("seed", s);
  }

  std::string ToText() const {
    std::string out;
    for (const auto &k : Schema()) out += k.name + " = " + values_.at(k.name) + "\n";
    return out;
  }

  const std::string &Get(const std::string &name) const {
    Lookup(name);
    return values_.at(name);
  }
  long Int(const std::string &name) const { return std::stol(Get(name)); }
  std::size_t Size(const std::string &name) const { return static_cast<std::size_t>(Int(name)); }
  double Real(const std::string &name) const { return std::stod(Get(name)); }
  bool Bool(const std::string &name) const { return Get(name) == "true"; }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(Int("seed")); }

  SynthTaskConfig Synth() const {
    SynthTaskConfig c;
    c.vocab_size = Size("data.vocab_size");
    c.utterances = Size("data.utterances");
    c.tokens = Size("data.tokens");
    c.n_topics = Size("data.n_topics");
    c.n_groups = Size("data.n_groups");
    c.ambiguity_rate = Real("data.ambiguity_rate");
    c.noise = Real("data.noise");
    c.feat_dim = Size("data.feat_dim");
    c.frames_per_token = Size("data.frames_per_token");
    c.n_train = Size("data.n_train");
    c.n_valid = Size("data.n_valid");
    c.n_test = Size("data.n_test");
    c.seed = seed();
    return c;
  }

  /// Architecture for a given vocabulary and raw feature dimension.
  ModelConfig Model(std::size_t vocab_size, std::size_t raw_feat_dim) const {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.feat_dim = Bool("features.deltas") ? 3 * raw_feat_dim : raw_feat_dim;
    c.block.d_model = Size("model.d_model");
    c.block.n_heads = Size("model.n_heads");
    c.block.d_ffn = Size("model.d_ffn");
    c.block.dropout = Real("model.dropout");
    c.token_blocks = Size("model.token_blocks");
    c.utterance_blocks = Size("model.utterance_blocks");
    c.speech_blocks = Size("model.speech_blocks");
    c.decoder_blocks = Size("model.decoder_blocks");
    c.conv_channels1 = Size("model.conv_channels1");
    c.conv_channels2 = Size("model.conv_channels2");
    return c;
  }

  TrainingConfig Training() const {
    TrainingConfig c;
    const std::string &sm = Get("train.smoothing");
    c.smoothing = sm == "none"    ? Smoothing::kNone
                  : sm == "label" ? Smoothing::kLabel
                  : sm == "kd"    ? Smoothing::kKd
                                  : Smoothing::kKdContextFree;
    c.alpha = Real("train.alpha");
    c.label_eps = Real("train.label_eps");
    c.batch_size = Size("train.batch_size");
    c.max_utterances = Size("train.max_utterances");
    c.lr = Real("train.lr");
    c.warmup = static_cast<std::uint64_t>(Int("train.warmup"));
    c.clip_norm = Real("train.clip_norm");
    c.patience = Size("train.patience");
    c.max_epochs = Size("train.max_epochs");
    c.max_steps = static_cast<std::uint64_t>(Int("train.max_steps"));
    c.context = Get("train.context") == "none" ? ContextMode::kNone : ContextMode::kHierarchical;
    c.radam.beta1 = Real("train.radam.beta1");
    c.radam.beta2 = Real("train.radam.beta2");
    c.radam.eps = Real("train.radam.eps");
    c.specaug.enabled = Bool("train.specaug.enabled");
    c.specaug.n_freq_masks = Size("train.specaug.n_freq_masks");
    c.specaug.max_freq_width = Size("train.specaug.max_freq_width");
    c.specaug.n_time_masks = Size("train.specaug.n_time_masks");
    c.specaug.max_time_width = Size("train.specaug.max_time_width");
    c.seed = seed();
    c.Validate();
    return c;
  }

  DecodeConfig Decode() const {
    DecodeConfig c;
    c.beam_size = Size("decode.beam_size");
    c.max_len = Size("decode.max_len");
    c.length_norm = Bool("decode.length_norm");
    const std::string &ctx = Get("decode.context");
    c.context = ctx == "hypothesis" ? ContextSource::kHypothesis
                : ctx == "oracle"   ? ContextSource::kOracle
                                    : ContextSource::kNone;
    c.segment_length = Size("decode.segment_length");
    c.Validate();
    return c;
  }

  GradCheckOptions GradCheck() const {
    GradCheckOptions o;
    o.step = Real("gradcheck.step");
    o.tolerance = Real("gradcheck.tolerance");
    o.max_entries = Size("gradcheck.max_entries");
    o.seed = seed();
    return o;
  }

 private:
  static std::string Trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  static void Check(const Key &k, const std::string &v) {
    auto bad = [&](const std::string &what) {
      throw ConfigError("config key '" + k.name + "': " + what + ", got '" + v + "'");
    };
    std::size_t used = 0;
    switch (k.kind) {
      case Kind::kInt: {
        long x = 0;
        try {
          x = std::stol(v, &used);
        } catch (const std::exception &) {
          bad("expected an integer");
        }
        if (used != v.size()) bad("expected an integer");
        if (x < 0) bad("expected a non-negative integer");
        break;
      }
      case Kind::kReal:
        try {
          std::stod(v, &used);
        } catch (const std::exception &) {
          bad("expected a number");
        }
        if (used != v.size()) bad("expected a number");
        break;
      case Kind::kBool:
        if (v != "true" && v != "false") bad("expected true or false");
        break;
      case Kind::kChoice: {
        bool ok = false;
        for (const auto &c : k.choices) ok |= c == v;
        if (!ok) bad("not one of the allowed values");
        break;
      }
    }
  }

  std::map<std::string, std::string> values_;
};

inline Smoothing ParseSmoothing(const std::string &s) {
  if (s == "none") return Smoothing::kNone;
  if (s == "label") return Smoothing::kLabel;
  if (s == "kd") return Smoothing::kKd;
  if (s == "kd-context-free") return Smoothing::kKdContextFree;
  throw ConfigError("unknown smoothing mode '" + s + "'");
}

}  // namespace dsq

#endif  // DSQ_CONFIG_HPP_
