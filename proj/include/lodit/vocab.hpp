// Copyright 2026 The lodit Authors
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

#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lodit/corpus.hpp"
#include "lodit/marking.hpp"
#include "lodit/text.hpp"

namespace lodit {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;

/// Word-level vocabulary. Layout: specials, identifier tokens (pool order),
/// marker delimiters, then ordinary words.
class Vocabulary {
 public:
  static constexpr std::string_view kBos = "<bos>", kEos = "<eos>", kPad = "<pad>", kUnk = "<unk>";
  static constexpr std::string_view kOpen = "<", kOpenClose = "</", kClose = ">";

  Vocabulary() = default;

  /// Collects every word of `texts` after the reserved entries.
  static Vocabulary build(const IdentifierPool& pool, const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& t : texts)
      for (auto& p : pieces(t)) words.insert(std::move(p));
    std::vector<std::string> entries{std::string(kBos), std::string(kEos), std::string(kPad), std::string(kUnk)};
    for (const auto& id : pool.tokens()) entries.push_back(id);
    entries.insert(entries.end(), {std::string(kOpen), std::string(kOpenClose), std::string(kClose)});
    for (const auto& w : words) {
      if (pool.contains(" " + w)) continue;
      if (w == kOpen || w == kOpenClose || w == kClose) continue;
      entries.push_back(w);
    }
    return Vocabulary(std::move(entries));
  }

  /// Vocabulary covering a dataset, its prompts and the refusal sentence.
  static Vocabulary build(const IdentifierPool& pool, const std::vector<Example>& data,
                          const PromptTemplate& tmpl = {}, const std::string& refusal = kDefaultRefusal) {
    std::vector<std::string> texts{tmpl.instruction, build_prompt_without_context("", tmpl), refusal};
    for (const auto& ex : data) {
      texts.push_back(ex.query);
      for (const auto& d : ex.context) texts.push_back(d.text);
      for (const auto& g : ex.gold) texts.push_back(g.text);
    }
    return build(pool, texts);
  }

  explicit Vocabulary(std::vector<std::string> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (!index_.emplace(entries_[i], static_cast<TokenId>(i)).second)
        throw Error("duplicate vocabulary entry '" + entries_[i] + "'");
    bos_ = required(kBos);
    eos_ = required(kEos);
    pad_ = required(kPad);
    unk_ = required(kUnk);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (e.size() >= 2 && e[0] == ' ') identifiers_.push_back(static_cast<TokenId>(i));
    }
    delimiters_ = {required(kOpen), required(kOpenClose), required(kClose)};
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open vocabulary '" + path + "'");
    std::vector<std::string> entries;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) entries.push_back(line);
    }
    return Vocabulary(std::move(entries));
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write vocabulary '" + path + "'");
    for (const auto& e : entries_) out << e << '\n';
  }

  std::size_t size() const { return entries_.size(); }
  const std::string& operator[](TokenId i) const { return entries_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& entries() const { return entries_; }

  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  TokenId pad() const { return pad_; }
  TokenId unk() const { return unk_; }

  TokenId find(std::string_view w) const {
    auto it = index_.find(std::string(w));
    return it == index_.end() ? unk_ : it->second;
  }

  bool contains(std::string_view w) const { return index_.count(std::string(w)) > 0; }

  /// Vocabulary index of a pool identifier.
  TokenId identifier(const std::string& surface) const {
    auto it = index_.find(surface);
    if (it == index_.end()) throw Error("identifier '" + surface + "' is not in the vocabulary");
    return it->second;
  }

  bool is_identifier(TokenId t) const {
    return t >= 0 && static_cast<std::size_t>(t) < entries_.size() && entries_[t].size() >= 2 &&
           entries_[t][0] == ' ';
  }

  bool is_delimiter(TokenId t) const {
    return t == delimiters_[0] || t == delimiters_[1] || t == delimiters_[2];
  }

  /// Entries that decoding never emits.
  bool is_masked(TokenId t) const {
    return is_identifier(t) || is_delimiter(t) || t == bos_ || t == pad_ || t == unk_;
  }

  const std::vector<TokenId>& identifier_entries() const { return identifiers_; }

  /// FNV-1a over the newline-joined entries.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& e : entries_) {
      for (unsigned char c : e) h = (h ^ c) * 1099511628211ull;
      h = (h ^ '\n') * 1099511628211ull;
    }
    return h;
  }

  /// Splits text into surface pieces: marker delimiters and trailing
  /// punctuation separated, words otherwise whitespace-delimited.
  static std::vector<std::string> pieces(std::string_view s) {
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
      if (word.empty()) return;
      std::vector<std::string> trail;
      while (word.size() > 1 && is_punct(word.back())) {
        trail.emplace_back(1, word.back());
        word.pop_back();
      }
      out.push_back(word);
      out.insert(out.end(), trail.rbegin(), trail.rend());
      word.clear();
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
      char c = s[i];
      if (text::is_space(c)) {
        flush();
      } else if (c == '<') {
        flush();
        if (i + 1 < s.size() && s[i + 1] == '/') {
          out.emplace_back(kOpenClose);
          ++i;
        } else {
          out.emplace_back(kOpen);
        }
      } else if (c == '>') {
        flush();
        out.emplace_back(kClose);
      } else {
        word += c;
      }
    }
    flush();
    return out;
  }

  static bool is_punct(char c) {
    return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
  }

 private:
  TokenId required(std::string_view e) const {
    auto it = index_.find(std::string(e));
    if (it == index_.end()) throw Error("vocabulary lacks reserved entry '" + std::string(e) + "'");
    return it->second;
  }

  std::vector<std::string> entries_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId bos_ = 0, eos_ = 0, pad_ = 0, unk_ = 0;
  std::vector<TokenId> identifiers_;
  std::array<TokenId, 3> delimiters_{};
};

/// Word-level tokenization; identifier surface forms map to their reserved
/// entries, unknown words to UNK.
inline Tokens tokenize(std::string_view s, const Vocabulary& vocab) {
  Tokens out;
  for (const auto& p : Vocabulary::pieces(s)) {
    const std::string surface = " " + p;
    if (vocab.contains(surface) && vocab.is_identifier(vocab.find(surface)))
      out.push_back(vocab.find(surface));
    else
      out.push_back(vocab.find(p));
  }
  return out;
}

inline std::string detokenize(const Tokens& tokens, const Vocabulary& vocab) {
  std::string out;
  enum class Kind { None, Word, Punct, Open, Close, Ident } prev = Kind::None;
  for (auto t : tokens) {
    const auto& e = vocab[t];
    if (vocab.is_identifier(t)) {
      out += e;
      prev = Kind::Ident;
    } else if (e == Vocabulary::kOpen || e == Vocabulary::kOpenClose) {
      if (prev == Kind::Close) out += ' ';
      out += e;
      prev = Kind::Open;
    } else if (e == Vocabulary::kClose) {
      out += e;
      prev = Kind::Close;
    } else if (e.size() == 1 && Vocabulary::is_punct(e[0])) {
      out += e;
      prev = Kind::Punct;
    } else {
      if (prev != Kind::None && prev != Kind::Close && prev != Kind::Open) out += ' ';
      out += e;
      prev = Kind::Word;
    }
  }
  return out;
}

}  // namespace lodit
