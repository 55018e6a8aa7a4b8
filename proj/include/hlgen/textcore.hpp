// Copyright 2026 The hlgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hlgen/error.hpp"

namespace hlgen {

/// Lowercase tokens; none empty, none containing whitespace.
using TokenSeq = std::vector<std::string>;

inline constexpr std::size_t kDefaultMaxArticleLen = 400;
inline constexpr std::string_view kDetachedPunctuation = ".,:;!?()";

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Lowercases, masks every ASCII digit as '#', splits on whitespace and
/// detaches each of `.,:;!?()` as its own token.
inline TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (kDetachedPunctuation.find(c) != std::string_view::npos) {
      flush();
      out.emplace_back(1, c);
    } else if (c >= '0' && c <= '9') {
      cur.push_back('#');
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

inline std::string join(const TokenSeq& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

/// Token <-> id map with ids 0..3 reserved for PAD, UNK, BOS, EOS.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kNumReserved = 4;

  Vocabulary() : token_of_{"<pad>", "<unk>", "<s>", "</s>"} {
    for (std::size_t i = 0; i < token_of_.size(); ++i) id_of_.emplace(token_of_[i], i);
  }

  /// Appends corpus tokens after the reserved entries, in the given order.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const auto& t : tokens) {
      if (t.empty() || std::any_of(t.begin(), t.end(), is_space)) {
        throw FormatError("invalid vocabulary token '" + t + "'");
      }
      if (!v.id_of_.emplace(t, v.token_of_.size()).second) {
        throw FormatError("duplicate vocabulary token '" + t + "'");
      }
      v.token_of_.push_back(t);
    }
    return v;
  }

  std::size_t size() const noexcept { return token_of_.size(); }
  bool contains(const std::string& token) const { return id_of_.count(token) != 0; }

  /// Id of `token`, UNK when absent.
  std::size_t id_of(const std::string& token) const {
    auto it = id_of_.find(token);
    return it == id_of_.end() ? kUnk : it->second;
  }
  const std::string& token_of(std::size_t id) const { return token_of_.at(id); }

  /// Non-reserved tokens in id order.
  std::vector<std::string> corpus_tokens() const {
    return {token_of_.begin() + kNumReserved, token_of_.end()};
  }

  bool operator==(const Vocabulary& other) const { return token_of_ == other.token_of_; }

 private:
  std::vector<std::string> token_of_;
  std::unordered_map<std::string, std::size_t> id_of_;
};

/// Vocabulary file: one token per line; line k (0-based) holds id k + 4.
inline void write_vocab(std::ostream& os, const Vocabulary& vocab) {
  for (const auto& t : vocab.corpus_tokens()) os << t << '\n';
}

inline Vocabulary read_vocab(std::istream& is) {
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || std::any_of(line.begin(), line.end(), is_space)) {
      throw FormatError("invalid vocabulary entry", lineno);
    }
    tokens.push_back(line);
  }
  return Vocabulary::from_tokens(tokens);
}

inline Vocabulary load_vocab(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingPrerequisite("vocabulary not found: " + path);
  return read_vocab(is);
}

struct ExamplePair {
  TokenSeq article;
  TokenSeq headline;
};

inline ExamplePair make_example(std::string_view raw_article, std::string_view raw_headline,
                                std::size_t max_article_len = kDefaultMaxArticleLen) {
  ExamplePair p{tokenize(raw_article), tokenize(raw_headline)};
  if (p.article.size() > max_article_len) p.article.resize(max_article_len);
  return p;
}

/// The `max_size - 4` most frequent article+headline tokens, ties broken
/// lexicographically, after the reserved ids.
inline Vocabulary build_vocab(std::span<const ExamplePair> corpus, std::size_t max_size) {
  if (max_size <= Vocabulary::kNumReserved) throw Error("build_vocab: max_size must exceed 4");
  if (corpus.empty()) throw Error("empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& p : corpus) {
    for (const auto& t : p.article) ++counts[t];
    for (const auto& t : p.headline) ++counts[t];
  }
  const Vocabulary reserved;
  std::erase_if(counts, [&](const auto& kv) { return reserved.contains(kv.first); });
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - Vocabulary::kNumReserved);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary::from_tokens(tokens);
}

/// Base vocabulary extended with the article's out-of-vocabulary tokens;
/// the k-th OOV has id base.size() + k. Holds a pointer to `base`, which
/// must outlive it.
class ExtendedVocab {
 public:
  ExtendedVocab() = default;
  explicit ExtendedVocab(const Vocabulary& base) : base_(&base) {}

  const Vocabulary& base() const { return *base_; }
  const std::vector<std::string>& article_oovs() const noexcept { return oovs_; }
  std::size_t size() const { return base_->size() + oovs_.size(); }

  /// Registers `token` if it is new and absent from the base; returns its extended id.
  std::size_t add_oov(const std::string& token) {
    auto it = std::find(oovs_.begin(), oovs_.end(), token);
    if (it != oovs_.end()) return base_->size() + static_cast<std::size_t>(it - oovs_.begin());
    oovs_.push_back(token);
    return base_->size() + oovs_.size() - 1;
  }

  /// Base id, else article-OOV id, else UNK.
  std::size_t id_of(const std::string& token) const {
    if (base_->contains(token)) return base_->id_of(token);
    auto it = std::find(oovs_.begin(), oovs_.end(), token);
    if (it != oovs_.end()) return base_->size() + static_cast<std::size_t>(it - oovs_.begin());
    return Vocabulary::kUnk;
  }

  const std::string& token_of(std::size_t id) const {
    return id < base_->size() ? base_->token_of(id) : oovs_.at(id - base_->size());
  }

  /// Id used for embedding lookups: copied OOVs read as UNK.
  std::size_t input_id(std::size_t ext_id) const {
    return ext_id < base_->size() ? ext_id : Vocabulary::kUnk;
  }

 private:
  const Vocabulary* base_ = nullptr;
  std::vector<std::string> oovs_;
};

struct EncodedPair {
  std::vector<std::size_t> src_ids;      // UNK for OOV
  std::vector<std::size_t> src_ext_ids;  // article OOVs get extended ids
  std::vector<std::size_t> tgt_ids;      // headline, UNK for OOV
  std::vector<std::size_t> tgt_ext_ids;  // headline, copyable OOVs get extended ids
  ExtendedVocab ext;

  /// BOS followed by the headline (teacher-forced decoder inputs).
  std::vector<std::size_t> decoder_inputs() const {
    std::vector<std::size_t> out{Vocabulary::kBos};
    out.insert(out.end(), tgt_ids.begin(), tgt_ids.end());
    return out;
  }
  /// Headline extended ids followed by EOS (decoder targets).
  std::vector<std::size_t> decoder_targets() const {
    std::vector<std::size_t> out = tgt_ext_ids;
    out.push_back(Vocabulary::kEos);
    return out;
  }
};

inline EncodedPair encode_with_pointer(const ExamplePair& pair, const Vocabulary& vocab) {
  EncodedPair e;
  e.ext = ExtendedVocab(vocab);
  for (const auto& t : pair.article) {
    const std::size_t id = vocab.id_of(t);
    e.src_ids.push_back(id);
    e.src_ext_ids.push_back(vocab.contains(t) ? id : e.ext.add_oov(t));
  }
  for (const auto& t : pair.headline) {
    e.tgt_ids.push_back(vocab.id_of(t));
    e.tgt_ext_ids.push_back(e.ext.id_of(t));
  }
  return e;
}

/// Maps extended ids back to tokens, dropping PAD/BOS/EOS and stopping at the first EOS.
inline TokenSeq decode_ids(std::span<const std::size_t> ids, const ExtendedVocab& ext) {
  TokenSeq out;
  for (std::size_t id : ids) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
    out.push_back(ext.token_of(id));
  }
  return out;
}

/// Corpus file: one `article<TAB>headline` record per line, raw text.
inline std::vector<ExamplePair> read_corpus(std::istream& is,
                                            std::size_t max_article_len = kDefaultMaxArticleLen) {
  std::vector<ExamplePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("missing tab separator", lineno);
    if (line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError("more than one tab separator", lineno);
    }
    ExamplePair p = make_example(std::string_view(line).substr(0, tab),
                                 std::string_view(line).substr(tab + 1), max_article_len);
    if (p.headline.empty()) throw FormatError("empty headline", lineno);
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<ExamplePair> load_corpus(const std::string& path,
                                            std::size_t max_article_len = kDefaultMaxArticleLen) {
  std::ifstream is(path);
  if (!is) throw MissingPrerequisite("corpus not found: " + path);
  return read_corpus(is, max_article_len);
}

inline void write_corpus(std::ostream& os, std::span<const ExamplePair> corpus) {
  for (const auto& p : corpus) os << join(p.article) << '\t' << join(p.headline) << '\n';
}

/// One tokenized sentence per line.
inline std::vector<TokenSeq> read_lines(std::istream& is) {
  std::vector<TokenSeq> out;
  std::string line;
  while (std::getline(is, line)) out.push_back(tokenize(line));
  return out;
}

inline std::vector<TokenSeq> load_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingPrerequisite("file not found: " + path);
  return read_lines(is);
}

}  // namespace hlgen
