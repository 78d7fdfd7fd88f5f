// dsq/vocabulary.hpp

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

#ifndef DSQ_VOCABULARY_HPP_
#define DSQ_VOCABULARY_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsq {

/// Splits UTF-8 text into code points (each returned as its byte string).
inline std::vector<std::string> SplitUtf8(const std::string &text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    len = std::min(len, text.size() - i);
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

inline std::uint32_t DecodeCodePoint(const std::string &ch) {
  const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(ch[i])); };
  switch (ch.size()) {
    case 1: return b(0);
    case 2: return ((b(0) & 0x1F) << 6) | (b(1) & 0x3F);
    case 3: return ((b(0) & 0x0F) << 12) | ((b(1) & 0x3F) << 6) | (b(2) & 0x3F);
    default: return ((b(0) & 0x07) << 18) | ((b(1) & 0x3F) << 12) | ((b(2) & 0x3F) << 6) | (b(3) & 0x3F);
  }
}

inline std::uint64_t Fnv1a64(const std::string &bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Character vocabulary with four reserved ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary() : tokens_{"<pad>", "<s>", "</s>", "<unk>"} { Reindex(); }

  /// One id per distinct character, ordered by code point.
  static Vocabulary Build(const std::vector<std::string> &texts) {
    if (texts.empty()) throw std::invalid_argument("cannot build a vocabulary from no text");
    std::set<std::string> chars;
    for (const auto &t : texts)
      for (auto &c : SplitUtf8(t)) chars.insert(c);
    std::vector<std::string> sorted(chars.begin(), chars.end());
    std::sort(sorted.begin(), sorted.end(), [](const std::string &a, const std::string &b) {
      return DecodeCodePoint(a) < DecodeCodePoint(b);
    });
    Vocabulary v;
    for (auto &c : sorted) v.tokens_.push_back(c);
    v.Reindex();
    return v;
  }

  static Vocabulary FromTokens(std::vector<std::string> tokens) {
    if (tokens.size() < kNumReserved || tokens[0] != "<pad>" || tokens[1] != "<s>" ||
        tokens[2] != "</s>" || tokens[3] != "<unk>")
      throw std::invalid_argument("vocabulary must start with <pad> <s> </s> <unk>");
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.Reindex();
    if (v.index_.size() != v.tokens_.size()) throw std::invalid_argument("duplicate vocabulary entry");
    return v;
  }

  static Vocabulary Load(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary " + path);
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) tokens.push_back(line);
    return FromTokens(std::move(tokens));
  }

  void Save(const std::string &path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary " + path);
    for (const auto &t : tokens_) out << t << '\n';
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string &token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string> &tokens() const { return tokens_; }

  int id(const std::string &ch) const {
    auto it = index_.find(ch);
    return it == index_.end() ? kUnk : it->second;
  }

  std::vector<int> Encode(const std::string &text) const {
    std::vector<int> ids;
    for (auto &c : SplitUtf8(text)) ids.push_back(id(c));
    return ids;
  }

  /// Joins ids back into text; reserved ids other than UNK are dropped and
  /// UNK becomes U+FFFD.
  std::string Decode(const std::vector<int> &ids) const {
    std::string out;
    for (int i : ids) {
      if (i == kUnk) out += "\xEF\xBF\xBD";
      else if (i >= kNumReserved) out += token(i);
    }
    return out;
  }

  std::uint64_t Hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto &t : tokens_) h = Fnv1a64(t + "\n", h);
    return h;
  }

 private:
  void Reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
  }

  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

}  // namespace dsq

#endif  // DSQ_VOCABULARY_HPP_
