// dsq/io.hpp

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

#ifndef DSQ_IO_HPP_
#define DSQ_IO_HPP_

// Binary and text file formats. All binary integers and floats are
// little-endian.
//
//   features (.dsfx): "DSFX" u32 version, u32 f, u32 utterances,
//                     then per utterance u32 M and M*f float32, frame-major.
//   checkpoint:       "DSCK" u32 version, u32 blob length + blob bytes,
//                     tensor table, "OPTM" u64 step, tensor table.
//   tensor table:     u32 count, then per tensor u32 name length + bytes,
//                     u32 rank, u64 dims[rank], u8 bits (32|64), payload.
//   teacher cache:    "DSTC" u32 version, u64 vocabulary hash, u32 |V|,
//                     u8 context-free flag, u32 lectures, then per lecture
//                     u32 name length + bytes, u32 records, and records of
//                     u32 utterance, u32 token, |V| float32.
//   manifest:         lecture id <TAB> feature path <TAB> transcript path;
//                     relative paths are resolved against the manifest.
//   decode output:    lecture id <SPACE> utterance index <TAB> text.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsq/cer.hpp"
#include "dsq/corpus.hpp"
#include "dsq/graph.hpp"
#include "dsq/training.hpp"

namespace dsq {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Malformed or unreadable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io {

inline std::ofstream OpenOut(const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

inline std::ifstream OpenIn(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return in;
}

template <typename V>
void Put(std::ostream &out, V v) {
  out.write(reinterpret_cast<const char *>(&v), sizeof(V));
}

template <typename V>
V Get(std::istream &in) {
  V v{};
  in.read(reinterpret_cast<char *>(&v), sizeof(V));
  if (!in) throw DataError("unexpected end of file");
  return v;
}

inline void PutString(std::ostream &out, const std::string &s) {
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string GetString(std::istream &in, std::size_t limit = 1u << 30) {
  const auto n = Get<std::uint32_t>(in);
  if (n > limit) throw DataError("string length out of range");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw DataError("unexpected end of file");
  return s;
}

inline void ExpectMagic(std::istream &in, const char *magic, const std::string &path) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0)
    throw DataError(path + ": not a " + std::string(magic, 4) + " file");
}

}  // namespace io

// ---------------------------------------------------------------- features

inline void WriteFeatureFile(const std::string &path, const std::vector<Tensor<float>> &utterances) {
  if (utterances.empty()) throw DataError("feature file needs at least one utterance");
  const std::size_t f = utterances.front().cols();
  auto out = io::OpenOut(path);
  out.write("DSFX", 4);
  io::Put<std::uint32_t>(out, 1);
  io::Put<std::uint32_t>(out, static_cast<std::uint32_t>(f));
  io::Put<std::uint32_t>(out, static_cast<std::uint32_t>(utterances.size()));
  for (const auto &u : utterances) {
    if (u.rank() != 2 || u.cols() != f) throw DataError("utterances differ in feature dimension");
    io::Put<std::uint32_t>(out, static_cast<std::uint32_t>(u.rows()));
    out.write(reinterpret_cast<const char *>(u.data.data()),
              static_cast<std::streamsize>(u.size() * sizeof(float)));
  }
  if (!out) throw DataError("write failed: " + path);
}

inline std::vector<Tensor<float>> ReadFeatureFile(const std::string &path) {
  auto in = io::OpenIn(path);
  io::ExpectMagic(in, "DSFX", path);
  if (io::Get<std::uint32_t>(in) != 1) throw DataError(path + ": unsupported feature file version");
  const std::size_t f = io::Get<std::uint32_t>(in);
  const std::size_t n = io::Get<std::uint32_t>(in);
  if (f == 0) throw DataError(path + ": zero feature dimension");
  std::vector<Tensor<float>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = io::Get<std::uint32_t>(in);
    Tensor<float> x({m, f});
    in.read(reinterpret_cast<char *>(x.data.data()), static_cast<std::streamsize>(x.size() * sizeof(float)));
    if (!in) throw DataError(path + ": truncated");
    out.push_back(std::move(x));
  }
  return out;
}

// ---------------------------------------------------------------- text

inline std::vector<std::string> ReadLines(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void WriteTranscripts(const std::string &path, const std::vector<std::string> &texts) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto &t : texts) {
    if (t.find('\n') != std::string::npos) throw DataError("transcript contains a newline");
    out << t << '\n';
  }
}

struct ManifestEntry {
  std::string id;
  std::string features;
  std::string transcript;
};

inline std::vector<ManifestEntry> ReadManifest(const std::string &path) {
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::size_t lineno = 0;
  for (const auto &line : ReadLines(path)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    if (cols.size() != 3) throw DataError(path + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
    auto resolve = [&](const std::string &p) {
      const std::filesystem::path fp(p);
      return (fp.is_absolute() ? fp : base / fp).string();
    };
    entries.push_back({cols[0], resolve(cols[1]), resolve(cols[2])});
  }
  return entries;
}

inline std::vector<DiscourseSample> LoadManifest(const std::string &path) {
  std::vector<DiscourseSample> split;
  for (const auto &e : ReadManifest(path)) {
    DiscourseSample d;
    d.id = e.id;
    auto feats = ReadFeatureFile(e.features);
    auto texts = ReadLines(e.transcript);
    while (!texts.empty() && texts.back().empty()) texts.pop_back();
    if (feats.size() != texts.size())
      throw DataError("lecture " + e.id + ": " + std::to_string(feats.size()) + " feature matrices but " +
                      std::to_string(texts.size()) + " transcripts");
    for (std::size_t i = 0; i < feats.size(); ++i) d.utterances.push_back({std::move(feats[i]), texts[i]});
    try {
      d.Validate();
    } catch (const std::invalid_argument &ex) {
      throw DataError(ex.what());
    }
    split.push_back(std::move(d));
  }
  if (split.empty()) throw DataError(path + ": manifest lists no lectures");
  return split;
}

/// Writes features and transcripts under `dir` plus `dir/<name>.manifest`.
inline void WriteSplit(const std::string &dir, const std::string &name,
                       const std::vector<DiscourseSample> &split) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "feats");
  fs::create_directories(fs::path(dir) / "text");
  std::ofstream manifest(fs::path(dir) / (name + ".manifest"));
  if (!manifest) throw DataError("cannot write manifest in " + dir);
  for (const auto &d : split) {
    std::vector<Tensor<float>> feats;
    std::vector<std::string> texts;
    for (const auto &u : d.utterances) {
      feats.push_back(u.features);
      texts.push_back(u.text);
    }
    const std::string fp = "feats/" + d.id + ".dsfx";
    const std::string tp = "text/" + d.id + ".txt";
    WriteFeatureFile((fs::path(dir) / fp).string(), feats);
    WriteTranscripts((fs::path(dir) / tp).string(), texts);
    manifest << d.id << '\t' << fp << '\t' << tp << '\n';
  }
}

inline void WriteDecodes(const std::string &path, const TranscriptSet &decodes) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto &[key, text] : decodes) out << key.first << ' ' << key.second << '\t' << text << '\n';
}

inline TranscriptSet ReadDecodes(const std::string &path) {
  TranscriptSet set;
  std::size_t lineno = 0;
  for (const auto &line : ReadLines(path)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const auto space = line.rfind(' ', tab);
    if (tab == std::string::npos || space == std::string::npos)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected '<lecture> <index>\\t<text>'");
    std::size_t idx = 0;
    try {
      idx = std::stoul(line.substr(space + 1, tab - space - 1));
    } catch (const std::exception &) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad utterance index");
    }
    if (!set.emplace(std::make_pair(line.substr(0, space), idx), line.substr(tab + 1)).second)
      throw DataError(path + ":" + std::to_string(lineno) + ": duplicate utterance");
  }
  return set;
}

inline TranscriptSet ReferenceSet(const std::vector<DiscourseSample> &split) {
  TranscriptSet set;
  for (const auto &d : split)
    for (std::size_t i = 0; i < d.utterances.size(); ++i) set[{d.id, i}] = d.utterances[i].text;
  return set;
}

// ---------------------------------------------------------------- checkpoint

struct NamedTensor {
  std::string name;
  Tensor<double> value;
  bool wide = true;  // 64-bit payload
};

struct CheckpointData {
  std::string blob;  // configuration text
  std::vector<NamedTensor> tensors;
  std::uint64_t optimizer_step = 0;
  std::vector<NamedTensor> optimizer;
};

namespace io {

inline void PutTable(std::ostream &out, const std::vector<NamedTensor> &table) {
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(table.size()));
  for (const auto &t : table) {
    PutString(out, t.name);
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape) Put<std::uint64_t>(out, d);
    Put<std::uint8_t>(out, t.wide ? 64 : 32);
    for (double v : t.value.data) {
      if (t.wide)
        Put<double>(out, v);
      else
        Put<float>(out, static_cast<float>(v));
    }
  }
}

inline std::vector<NamedTensor> GetTable(std::istream &in) {
  std::vector<NamedTensor> table(Get<std::uint32_t>(in));
  for (auto &t : table) {
    t.name = GetString(in, 4096);
    const auto rank = Get<std::uint32_t>(in);
    if (rank > 8) throw DataError("tensor " + t.name + ": rank out of range");
    Shape shape(rank);
    for (auto &d : shape) d = Get<std::uint64_t>(in);
    const auto bits = Get<std::uint8_t>(in);
    if (bits != 32 && bits != 64) throw DataError("tensor " + t.name + ": bad payload width");
    t.wide = bits == 64;
    t.value = Tensor<double>(shape);
    for (auto &v : t.value.data) v = t.wide ? Get<double>(in) : static_cast<double>(Get<float>(in));
  }
  return table;
}

}  // namespace io

inline void WriteCheckpoint(const std::string &path, const CheckpointData &ck) {
  auto out = io::OpenOut(path);
  out.write("DSCK", 4);
  io::Put<std::uint32_t>(out, 1);
  io::PutString(out, ck.blob);
  io::PutTable(out, ck.tensors);
  out.write("OPTM", 4);
  io::Put<std::uint64_t>(out, ck.optimizer_step);
  io::PutTable(out, ck.optimizer);
  if (!out) throw DataError("write failed: " + path);
}

inline CheckpointData ReadCheckpoint(const std::string &path) {
  auto in = io::OpenIn(path);
  io::ExpectMagic(in, "DSCK", path);
  if (io::Get<std::uint32_t>(in) != 1) throw DataError(path + ": unsupported checkpoint version");
  CheckpointData ck;
  ck.blob = io::GetString(in);
  ck.tensors = io::GetTable(in);
  io::ExpectMagic(in, "OPTM", path);
  ck.optimizer_step = io::Get<std::uint64_t>(in);
  ck.optimizer = io::GetTable(in);
  return ck;
}

template <typename T>
void ExportParams(const ParameterSet<T> &params, std::vector<NamedTensor> &table) {
  for (const auto &p : params) table.push_back({p.name, p.value.template cast<double>(), sizeof(T) == 8});
}

/// Copies every parameter from `table`; a missing name or a shape mismatch
/// is an error.
template <typename T>
void ImportParams(ParameterSet<T> &params, const std::vector<NamedTensor> &table) {
  std::map<std::string, const NamedTensor *> by_name;
  for (const auto &t : table) by_name[t.name] = &t;
  for (auto &p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("checkpoint lacks parameter " + p.name);
    if (it->second->value.shape != p.value.shape)
      throw DataError("parameter " + p.name + ": checkpoint shape " + ShapeString(it->second->value.shape) +
                      " vs model " + ShapeString(p.value.shape));
    p.value = it->second->value.template cast<T>();
  }
}

template <typename T>
void ExportOptimizer(const RAdam<T> &opt, CheckpointData &ck) {
  ck.optimizer_step = opt.step();
  for (const auto &[name, mo] : opt.moments()) {
    ck.optimizer.push_back({"m/" + name, mo.m.template cast<double>(), sizeof(T) == 8});
    ck.optimizer.push_back({"v/" + name, mo.v.template cast<double>(), sizeof(T) == 8});
  }
}

template <typename T>
void ImportOptimizer(RAdam<T> &opt, const CheckpointData &ck) {
  opt.set_step(ck.optimizer_step);
  opt.moments().clear();
  for (const auto &t : ck.optimizer) {
    if (t.name.size() < 3 || t.name[1] != '/') throw DataError("bad optimizer entry " + t.name);
    auto &mo = opt.moments()[t.name.substr(2)];
    (t.name[0] == 'm' ? mo.m : mo.v) = t.value.template cast<T>();
  }
}

// ---------------------------------------------------------------- teacher cache

inline void WriteTeacherCache(const std::string &path, const TeacherCache &cache) {
  auto out = io::OpenOut(path);
  out.write("DSTC", 4);
  io::Put<std::uint32_t>(out, 1);
  io::Put<std::uint64_t>(out, cache.vocab_hash);
  io::Put<std::uint32_t>(out, static_cast<std::uint32_t>(cache.vocab_size));
  io::Put<std::uint8_t>(out, cache.context_free ? 1 : 0);
  io::Put<std::uint32_t>(out, static_cast<std::uint32_t>(cache.lectures.size()));
  for (const auto &[id, utts] : cache.lectures) {
    io::PutString(out, id);
    std::uint32_t records = 0;
    for (const auto &u : utts) records += static_cast<std::uint32_t>(u.rows());
    io::Put<std::uint32_t>(out, records);
    for (std::size_t u = 0; u < utts.size(); ++u)
      for (std::size_t n = 0; n < utts[u].rows(); ++n) {
        if (utts[u].cols() != cache.vocab_size) throw DataError("teacher row width differs from |V|");
        io::Put<std::uint32_t>(out, static_cast<std::uint32_t>(u));
        io::Put<std::uint32_t>(out, static_cast<std::uint32_t>(n));
        out.write(reinterpret_cast<const char *>(&utts[u].data[n * cache.vocab_size]),
                  static_cast<std::streamsize>(cache.vocab_size * sizeof(float)));
      }
  }
  if (!out) throw DataError("write failed: " + path);
}

inline TeacherCache ReadTeacherCache(const std::string &path) {
  auto in = io::OpenIn(path);
  io::ExpectMagic(in, "DSTC", path);
  if (io::Get<std::uint32_t>(in) != 1) throw DataError(path + ": unsupported teacher cache version");
  TeacherCache cache;
  cache.vocab_hash = io::Get<std::uint64_t>(in);
  cache.vocab_size = io::Get<std::uint32_t>(in);
  cache.context_free = io::Get<std::uint8_t>(in) != 0;
  const auto lectures = io::Get<std::uint32_t>(in);
  for (std::uint32_t l = 0; l < lectures; ++l) {
    auto &utts = cache.lectures[io::GetString(in, 4096)];
    const auto records = io::Get<std::uint32_t>(in);
    std::vector<std::vector<std::vector<float>>> rows;
    for (std::uint32_t r = 0; r < records; ++r) {
      const auto u = io::Get<std::uint32_t>(in);
      const auto n = io::Get<std::uint32_t>(in);
      std::vector<float> p(cache.vocab_size);
      in.read(reinterpret_cast<char *>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(float)));
      if (!in) throw DataError(path + ": truncated");
      if (u >= rows.size()) rows.resize(u + 1);
      if (n != rows[u].size()) throw DataError(path + ": records out of order");
      rows[u].push_back(std::move(p));
    }
    utts.resize(rows.size());
    for (std::size_t u = 0; u < rows.size(); ++u) {
      utts[u] = Tensor<float>({rows[u].size(), cache.vocab_size});
      for (std::size_t n = 0; n < rows[u].size(); ++n)
        std::copy(rows[u][n].begin(), rows[u][n].end(), utts[u].data.begin() + n * cache.vocab_size);
    }
  }
  return cache;
}

}  // namespace dsq

#endif  // DSQ_IO_HPP_
