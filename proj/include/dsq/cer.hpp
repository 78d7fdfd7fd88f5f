// dsq/cer.hpp

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

#ifndef DSQ_CER_HPP_
#define DSQ_CER_HPP_

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsq/vocabulary.hpp"

namespace dsq {

/// Levenshtein distance with unit costs over arbitrary symbol sequences.
template <typename Seq>
std::size_t EditDistance(const Seq &a, const Seq &b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct CerCounts {
  std::size_t errors = 0;
  std::size_t ref_length = 0;
  double rate() const {
    return ref_length ? static_cast<double>(errors) / static_cast<double>(ref_length) : 0.0;
  }
};

/// Character-level counts; strings are split into UTF-8 characters.
inline CerCounts CerOf(const std::string &hyp, const std::string &ref) {
  const auto r = SplitUtf8(ref);
  if (r.empty()) throw std::invalid_argument("reference transcript is empty");
  return {EditDistance(SplitUtf8(hyp), r), r.size()};
}

inline double ComputeCer(const std::string &hyp, const std::string &ref) { return CerOf(hyp, ref).rate(); }

/// (lecture id, utterance index) -> text
using TranscriptSet = std::map<std::pair<std::string, std::size_t>, std::string>;

/// Micro-averaged CER: total edits over total reference characters. Every
/// reference utterance must have a decode and vice versa.
inline CerCounts ScoreCorpus(const TranscriptSet &decodes, const TranscriptSet &references) {
  if (references.empty()) throw std::invalid_argument("no reference utterances");
  CerCounts total;
  for (const auto &[key, ref] : references) {
    auto it = decodes.find(key);
    if (it == decodes.end())
      throw std::invalid_argument("missing decode for " + key.first + " " + std::to_string(key.second));
    const CerCounts c = CerOf(it->second, ref);
    total.errors += c.errors;
    total.ref_length += c.ref_length;
  }
  if (decodes.size() != references.size())
    throw std::invalid_argument("decode has utterances absent from the reference");
  return total;
}

}  // namespace dsq

#endif  // DSQ_CER_HPP_
