// tools/dsq.cpp

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

// dsq: synthetic data generation, training, decoding and scoring.
//
// Exit status: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure (non-finite values, failed gradient check).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dsq/cer.hpp"
#include "dsq/config.hpp"
#include "dsq/gradcheck.hpp"
#include "dsq/io.hpp"
#include "dsq/pipeline.hpp"

namespace fs = std::filesystem;

namespace dsq {
namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

// Thrown for bad command lines that CLI11 cannot see (e.g. missing teacher).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void AddCommon(CLI::App *cmd, Common &c) {
  cmd->add_option("--config", c.config, "run configuration file (key = value lines)");
  cmd->add_option("--set", c.sets, "override one key, e.g. --set train.lr=0.001")->take_all();
}

/// defaults <- config file <- DSQ_SEED <- --set
RunConfig Resolve(const Common &c, RunConfig rc = {}) {
  if (!c.config.empty()) rc.LoadFile(c.config);
  rc.ApplyEnvironment();
  for (const auto &s : c.sets) rc.SetAssignment(s);
  return rc;
}

void WriteText(const std::string &path, const std::string &text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

void PrepareOutDir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir);
}

/// A corpus argument is either a manifest or a directory written by gen-data.
std::string ManifestOf(const std::string &corpus, const std::string &split) {
  if (fs::is_directory(corpus)) return (fs::path(corpus) / (split + ".manifest")).string();
  return corpus;
}

class MetricsLog {
 public:
  explicit MetricsLog(const std::string &path) : out_(path) {
    if (!out_) throw DataError("cannot write " + path);
  }
  void operator()(const EpochMetrics &m) {
    out_ << m.epoch << '\t' << m.train_loss << '\t' << m.valid_loss << '\t' << m.wall_seconds << '\n';
    out_.flush();
    std::fprintf(stderr, "epoch %zu  train %.6f  valid %.6f  %.1fs\n", m.epoch, m.train_loss, m.valid_loss,
                 m.wall_seconds);
  }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------- gen-data

int GenData(const RunConfig &rc, const std::string &out, bool force) {
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw DataError(out + " exists and is not empty (use --force to overwrite)");
  if (force) fs::remove_all(out);
  PrepareOutDir(out);
  const SyntheticCorpus corpus = GenerateSyntheticCorpus(rc.Synth());
  WriteSplit(out, "train", corpus.train);
  WriteSplit(out, "valid", corpus.valid);
  WriteSplit(out, "test", corpus.test);
  WriteText((fs::path(out) / "config.txt").string(), rc.ToText());
  std::printf("wrote %zu/%zu/%zu discourses to %s\n", corpus.train.size(), corpus.valid.size(),
              corpus.test.size(), out.c_str());
  return 0;
}

// ---------------------------------------------------------------- train-lm

template <typename T>
int TrainLmRun(const RunConfig &rc, const std::string &corpus, const std::string &out) {
  const auto train_split = LoadManifest(ManifestOf(corpus, "train"));
  const auto valid_split = LoadManifest(ManifestOf(corpus, "valid"));
  const Vocabulary vocab = Vocabulary::Build(AllTexts(train_split));
  const TrainingConfig cfg = rc.Training();
  PrepareOutDir(out);
  WriteText((fs::path(out) / "config.txt").string(), rc.ToText());
  vocab.Save((fs::path(out) / "vocab.txt").string());

  const auto train = PreparedSplit<T>::Make(train_split, vocab, nullptr, cfg.max_utterances);
  const auto valid = PreparedSplit<T>::Make(valid_split, vocab, nullptr, cfg.max_utterances);
  const std::size_t raw_dim = train_split.front().utterances.front().features.cols();
  LanguageModel<T> lm(rc.Model(vocab.size(), raw_dim), rc.seed());
  RAdam<T> opt(cfg.radam);
  MetricsLog log((fs::path(out) / "metrics.tsv").string());
  const TrainResult r = TrainLm(lm, train, valid, cfg, opt, std::ref(log));
  SaveLm((fs::path(out) / "lm.dsck").string(), lm, &opt, vocab, rc);
  std::printf("best epoch %zu of %zu%s, valid perplexity %.6f\n", r.best_epoch, r.epochs.size(),
              r.early_stopped ? " (early stop)" : "", std::exp(r.best_valid_loss));
  return 0;
}

// ---------------------------------------------------------------- train-asr

template <typename T>
int TrainAsrRun(const RunConfig &rc, const std::string &corpus, const std::string &teacher_path,
                const std::string &out) {
  const TrainingConfig cfg = rc.Training();
  const bool kd = cfg.smoothing == Smoothing::kKd || cfg.smoothing == Smoothing::kKdContextFree;
  if (kd && teacher_path.empty()) throw UsageError("smoothing " + rc.Get("train.smoothing") + " needs --teacher");
  if (!kd && !teacher_path.empty()) throw UsageError("--teacher is only used with kd smoothing");

  const auto train_split = LoadManifest(ManifestOf(corpus, "train"));
  const auto valid_split = LoadManifest(ManifestOf(corpus, "valid"));
  const Vocabulary vocab = Vocabulary::Build(AllTexts(train_split));

  TeacherCache teacher;
  if (kd) {
    const LoadedLm<T> lm = LoadLm<T>(teacher_path);
    if (lm.vocab.Hash() != vocab.Hash())
      throw DataError("teacher vocabulary does not match the student vocabulary");
    const ContextMode mode = cfg.smoothing == Smoothing::kKd ? ContextMode::kHierarchical : ContextMode::kNone;
    teacher = ComputeTeacherDistributions(*lm.model, train_split, lm.vocab, cfg.max_utterances, mode);
    CheckTeacherVocabulary(teacher, vocab);
  }

  PrepareOutDir(out);
  WriteText((fs::path(out) / "config.txt").string(), rc.ToText());
  vocab.Save((fs::path(out) / "vocab.txt").string());
  if (kd) WriteTeacherCache((fs::path(out) / "teacher.dstc").string(), teacher);

  const bool deltas = rc.Bool("features.deltas");
  const FeatureStats<T> stats = EstimateStats<T>(train_split, deltas);
  const auto train = PreparedSplit<T>::Make(train_split, vocab, &stats, cfg.max_utterances, deltas);
  const auto valid = PreparedSplit<T>::Make(valid_split, vocab, &stats, cfg.max_utterances, deltas);
  const std::size_t raw_dim = train_split.front().utterances.front().features.cols();
  AsrModel<T> model(rc.Model(vocab.size(), raw_dim), rc.seed());
  RAdam<T> opt(cfg.radam);
  MetricsLog log((fs::path(out) / "metrics.tsv").string());
  const TrainResult r = TrainAsr(model, train, valid, cfg, kd ? &teacher : nullptr, opt, std::ref(log));
  SaveAsr((fs::path(out) / "asr.dsck").string(), model, &opt, vocab, stats, raw_dim, rc);
  std::printf("best epoch %zu of %zu%s, valid loss %.6f\n", r.best_epoch, r.epochs.size(),
              r.early_stopped ? " (early stop)" : "", r.best_valid_loss);
  return 0;
}

// ---------------------------------------------------------------- decode

/// The checkpoint fixes everything but the decode.* keys; a config that
/// disagrees on any other key does not describe this checkpoint.
RunConfig DecodeConfigFor(const RunConfig &ckpt, const Common &c) {
  const RunConfig merged = Resolve(c, ckpt);
  for (const auto &k : RunConfig::Schema()) {
    if (k.name.rfind("decode.", 0) == 0 || k.name == "seed") continue;
    if (merged.Get(k.name) != ckpt.Get(k.name))
      throw DataError("config sets " + k.name + " = " + merged.Get(k.name) + " but the checkpoint was trained with " +
                      ckpt.Get(k.name));
  }
  return merged;
}

template <typename T>
int DecodeRun(const std::string &ckpt, const Common &common, const std::string &corpus, const std::string &out) {
  LoadedAsr<T> asr = LoadAsr<T>(ckpt);
  const RunConfig rc = DecodeConfigFor(asr.config, common);
  const DecodeConfig dc = rc.Decode();
  const auto split = LoadManifest(ManifestOf(corpus, "test"));
  for (const auto &d : split)
    if (d.utterances.front().features.cols() != asr.raw_feat_dim)
      throw DataError("lecture " + d.id + " has feature dimension " +
                      std::to_string(d.utterances.front().features.cols()) + ", the checkpoint expects " +
                      std::to_string(asr.raw_feat_dim));
  const TranscriptSet decodes = DecodeSplit(*asr.model, asr.vocab, asr.stats, rc.Bool("features.deltas"), split, dc);
  WriteDecodes(out, decodes);
  WriteText(out + ".config.txt", rc.ToText());
  std::printf("decoded %zu utterances to %s\n", decodes.size(), out.c_str());
  return 0;
}

// ---------------------------------------------------------------- eval

TranscriptSet LoadReference(const std::string &path) {
  if (fs::path(path).extension() == ".manifest") return ReferenceSet(LoadManifest(path));
  return ReadDecodes(path);
}

int Eval(const std::string &hyp, const std::string &ref) {
  CerCounts c;
  try {
    c = ScoreCorpus(ReadDecodes(hyp), LoadReference(ref));
  } catch (const std::invalid_argument &e) {
    throw DataError(e.what());
  }
  std::printf("CER %.6f (%zu errors / %zu characters)\n", c.rate(), c.errors, c.ref_length);
  return 0;
}

// ---------------------------------------------------------------- gradcheck

/// Finite-difference check of the ASR and LM losses at the configured
/// architecture, in 64-bit mode, on one small synthetic discourse.
int GradCheckRun(RunConfig rc) {
  rc.Set("data.n_train", "1");
  rc.Set("data.utterances", "3");
  const SyntheticCorpus corpus = GenerateSyntheticCorpus(rc.Synth());
  const Vocabulary vocab = Vocabulary::Build(AllTexts(corpus.train));
  const bool deltas = rc.Bool("features.deltas");
  const auto stats = EstimateStats<double>(corpus.train, deltas);
  const auto data = PreparedSplit<double>::Make(corpus.train, vocab, &stats, 50, deltas);
  const ModelConfig mc = rc.Model(vocab.size(), rc.Size("data.feat_dim"));
  const GradCheckOptions opt = rc.GradCheck();
  const auto &texts = data.texts.front();
  const auto &feats = data.features.front();

  // Smoothed targets exercise every output entry.
  std::vector<Tensor<double>> targets;
  for (const auto &t : texts)
    targets.push_back(SmoothTargetsLabel(OneHotTargets<double>(t, vocab.size()), 0.2));

  bool ok = true;
  auto report = [&](const char *what, const GradCheckReport &r) {
    std::printf("%-24s %6zu entries  max rel error %.3e  %s%s\n", what, r.checked, r.max_rel_error,
                r.passed ? "ok" : "FAILED at ", r.passed ? "" : r.worst.c_str());
    ok &= r.passed;
  };
  for (ContextMode mode : {ContextMode::kHierarchical, ContextMode::kNone}) {
    AsrModel<double> asr(mc, rc.seed());
    auto loss = [&](Graph<double> &g) {
      auto lps = AsrSegmentLogProbs<double>(g, asr, feats, texts, mode);
      Expr<double> total = SoftTargetNll(lps[0], targets[0]);
      for (std::size_t t = 1; t < lps.size(); ++t) total = Add(total, SoftTargetNll(lps[t], targets[t]));
      return total;
    };
    report(mode == ContextMode::kNone ? "asr loss (no context)" : "asr loss", GradCheckParams<double>(loss, asr.params(), opt));
  }
  LanguageModel<double> lm(mc, rc.seed());
  auto lm_loss = [&](Graph<double> &g) {
    auto lps = LmSegmentLogProbs<double>(g, lm, texts, ContextMode::kHierarchical);
    Expr<double> total = SoftTargetNll(lps[0], targets[0]);
    for (std::size_t t = 1; t < lps.size(); ++t) total = Add(total, SoftTargetNll(lps[t], targets[t]));
    return total;
  };
  report("lm loss", GradCheckParams<double>(lm_loss, lm.params(), opt));
  std::printf("gradcheck %s (tolerance %g)\n", ok ? "passed" : "FAILED", opt.tolerance);
  return ok ? 0 : kNumeric;
}

template <template <typename> class Fn, typename... Args>
int Dispatch(const RunConfig &rc, Args &&...args) {
  if (rc.Get("model.precision") == "double") return Fn<double>::Run(rc, std::forward<Args>(args)...);
  return Fn<float>::Run(rc, std::forward<Args>(args)...);
}

template <typename T>
struct TrainLmCmd {
  static int Run(const RunConfig &rc, const std::string &corpus, const std::string &out) {
    return TrainLmRun<T>(rc, corpus, out);
  }
};

template <typename T>
struct TrainAsrCmd {
  static int Run(const RunConfig &rc, const std::string &corpus, const std::string &teacher, const std::string &out) {
    return TrainAsrRun<T>(rc, corpus, teacher, out);
  }
};

int Main(int argc, char **argv) {
  CLI::App app{"Large-context speech recognition toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common gen_c, lm_c, asr_c, dec_c, gc_c;
  std::string gen_out, lm_corpus, lm_out, asr_corpus, asr_out, asr_teacher, asr_smoothing;
  std::string dec_ckpt, dec_corpus, dec_out, dec_context, hyp, ref;
  std::size_t dec_beam = 0;
  bool force = false;

  auto *gen = app.add_subcommand("gen-data", "Write a synthetic corpus (manifests, features, transcripts)");
  AddCommon(gen, gen_c);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_flag("--force", force, "replace an existing output directory");

  auto *tlm = app.add_subcommand("train-lm", "Train the large-context language model");
  AddCommon(tlm, lm_c);
  tlm->add_option("--corpus", lm_corpus, "corpus directory (train/valid manifests)")->required();
  tlm->add_option("--out", lm_out, "run directory")->required();

  auto *tasr = app.add_subcommand("train-asr", "Train the large-context ASR model");
  AddCommon(tasr, asr_c);
  tasr->add_option("--corpus", asr_corpus, "corpus directory (train/valid manifests)")->required();
  tasr->add_option("--out", asr_out, "run directory")->required();
  tasr->add_option("--smoothing", asr_smoothing, "none|label|kd|kd-context-free")
      ->check(CLI::IsMember({"none", "label", "kd", "kd-context-free"}));
  tasr->add_option("--teacher", asr_teacher, "language-model checkpoint for kd smoothing");

  auto *dec = app.add_subcommand("decode", "Decode a corpus split with beam search");
  AddCommon(dec, dec_c);
  dec->add_option("--ckpt", dec_ckpt, "ASR checkpoint")->required();
  dec->add_option("--corpus", dec_corpus, "manifest, or corpus directory (uses test.manifest)")->required();
  dec->add_option("--out", dec_out, "decode output file")->required();
  dec->add_option("--beam", dec_beam, "beam size")->check(CLI::PositiveNumber);
  dec->add_option("--context", dec_context, "hypothesis|oracle|none")
      ->check(CLI::IsMember({"hypothesis", "oracle", "none"}));

  auto *ev = app.add_subcommand("eval", "Score a decode file (micro-averaged CER)");
  ev->add_option("--hyp", hyp, "decode file")->required();
  ev->add_option("--ref", ref, "reference manifest or decode-format file")->required();

  auto *gc = app.add_subcommand("gradcheck", "Finite-difference check of the model gradients");
  AddCommon(gc, gc_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsage;
  }

  if (*gen) return GenData(Resolve(gen_c), gen_out, force);
  if (*tlm) {
    const RunConfig rc = Resolve(lm_c);
    return Dispatch<TrainLmCmd>(rc, lm_corpus, lm_out);
  }
  if (*tasr) {
    if (!asr_smoothing.empty()) asr_c.sets.push_back("train.smoothing=" + asr_smoothing);
    const RunConfig rc = Resolve(asr_c);
    return Dispatch<TrainAsrCmd>(rc, asr_corpus, asr_teacher, asr_out);
  }
  if (*dec) {
    if (dec_beam) dec_c.sets.push_back("decode.beam_size=" + std::to_string(dec_beam));
    if (!dec_context.empty()) dec_c.sets.push_back("decode.context=" + dec_context);
    // Precision follows the checkpoint's stored payload; decoding in 64-bit
    // is exact for both.
    return DecodeRun<double>(dec_ckpt, dec_c, dec_corpus, dec_out);
  }
  if (*ev) return Eval(hyp, ref);
  return GradCheckRun(Resolve(gc_c));
}

}  // namespace
}  // namespace dsq

int main(int argc, char **argv) {
  using namespace dsq;
  try {
    return Main(argc, argv);
  } catch (const ConfigError &e) {
    std::fprintf(stderr, "dsq: %s\n", e.what());
    return kUsage;
  } catch (const UsageError &e) {
    std::fprintf(stderr, "dsq: %s\n", e.what());
    return kUsage;
  } catch (const NumericError &e) {
    std::fprintf(stderr, "dsq: numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "dsq: %s\n", e.what());
    return kData;
  }
}
