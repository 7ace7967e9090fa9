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

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lodit/corpus.hpp"
#include "lodit/text.hpp"

namespace lodit {

enum class Marking { BA, BAS, AW };
enum class AssignMode { Random, Alphabetical };

inline std::string_view to_string(Marking m) {
  switch (m) {
    case Marking::BA: return "ba";
    case Marking::BAS: return "bas";
    case Marking::AW: return "aw";
  }
  return "?";
}

inline Marking parse_marking(std::string_view name) {
  const auto s = text::lower(name);
  if (s == "ba") return Marking::BA;
  if (s == "bas") return Marking::BAS;
  if (s == "aw") return Marking::AW;
  throw Error("unknown marking strategy '" + std::string(name) + "'");
}

/// Reserved identifier surface forms. Each carries a leading space and must
/// be a single vocabulary entry.
class IdentifierPool {
 public:
  IdentifierPool() : IdentifierPool(std::vector<std::string>{" AA", " BB", " CC", " DD", " EE",
                                                              " FF", " GG", " HH", " II", " JJ"}) {}

  explicit IdentifierPool(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw Error("identifier pool is empty");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto& t = tokens_[i];
      if (t.size() < 2 || t[0] != ' ' || text::split_words(t).size() != 1 ||
          t.find_first_of("<>") != std::string::npos)
        throw Error("malformed identifier token '" + t + "'");
      for (std::size_t j = 0; j < i; ++j)
        if (tokens_[j] == t) throw Error("duplicate identifier token '" + t + "'");
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::size_t index_of(std::string_view token) const {
    auto it = std::find(tokens_.begin(), tokens_.end(), token);
    if (it == tokens_.end()) throw Error("'" + std::string(token) + "' is not a pool identifier");
    return static_cast<std::size_t>(it - tokens_.begin());
  }

  bool contains(std::string_view token) const {
    return std::find(tokens_.begin(), tokens_.end(), token) != tokens_.end();
  }

 private:
  std::vector<std::string> tokens_;
};

/// Context position k (0-based here) -> pool slot.
struct IdentifierAssignment {
  std::vector<std::size_t> slots;
  AssignMode mode = AssignMode::Random;

  std::size_t size() const { return slots.size(); }
  const std::string& token(const IdentifierPool& pool, std::size_t k) const { return pool[slots[k]]; }

  /// Reorders positions: result position k takes the identifier of position perm[k].
  IdentifierAssignment permuted(const std::vector<std::size_t>& perm) const {
    IdentifierAssignment out{{}, mode};
    for (auto p : perm) out.slots.push_back(slots.at(p));
    return out;
  }
};

inline IdentifierAssignment assign_identifiers(std::size_t k, const IdentifierPool& pool,
                                               AssignMode mode, Rng& rng) {
  if (k > pool.size())
    throw Error("cannot assign " + std::to_string(k) + " identifiers from a pool of " +
                std::to_string(pool.size()));
  IdentifierAssignment a;
  a.mode = mode;
  if (mode == AssignMode::Alphabetical) {
    for (std::size_t i = 0; i < k; ++i) a.slots.push_back(i);
  } else {
    a.slots = sample_indices(pool.size(), k, rng);
  }
  return a;
}

struct MarkedDocument {
  Document source;
  std::string identifier;
  Marking strategy = Marking::BA;
  std::string rendered;
};

namespace detail {

inline void check_markable(const Document& doc, const std::string& id) {
  validate(doc);
  const auto bare = std::string(text::trim(id));
  for (const auto& w : text::split_words(doc.text))
    if (w == bare) throw Error("identifier '" + id + "' collides with text of document '" + doc.id + "'");
}

inline std::string open_tag(const std::string& id) { return "<" + id + ">"; }
inline std::string close_tag(const std::string& id) { return "</" + id + ">"; }

inline void erase_all(std::string& s, const std::string& needle) {
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos))
    s.erase(pos, needle.size());
}

}  // namespace detail

/// Identifier before and after the whole document.
inline MarkedDocument mark_ba(const Document& doc, const std::string& id) {
  detail::check_markable(doc, id);
  return {doc, id, Marking::BA, detail::open_tag(id) + doc.text + detail::close_tag(id)};
}

/// Identifier before and after every sentence; wrapped sentences are joined
/// by a single space.
inline MarkedDocument mark_bas(const Document& doc, const std::string& id) {
  detail::check_markable(doc, id);
  std::vector<std::string> parts;
  for (const auto& s : text::split_sentences(doc.text))
    parts.push_back(detail::open_tag(id) + s + detail::close_tag(id));
  return {doc, id, Marking::BAS, text::join(parts, " ")};
}

/// Identifier before every whitespace-delimited word; no closing tag.
inline MarkedDocument mark_aw(const Document& doc, const std::string& id) {
  detail::check_markable(doc, id);
  std::string r;
  for (const auto& w : text::split_words(doc.text)) r += id + " " + w;
  return {doc, id, Marking::AW, r};
}

inline MarkedDocument mark(const Document& doc, const std::string& id, Marking m) {
  switch (m) {
    case Marking::BA: return mark_ba(doc, id);
    case Marking::BAS: return mark_bas(doc, id);
    case Marking::AW: return mark_aw(doc, id);
  }
  throw Error("unknown marking");
}

/// Inverse of the marking functions. BAS returns sentences joined by one
/// space; AW returns words joined by one space.
inline std::string strip(const std::string& rendered, const std::string& id, Marking m) {
  switch (m) {
    case Marking::BA: {
      const auto open = detail::open_tag(id), close = detail::close_tag(id);
      if (rendered.size() < open.size() + close.size() || rendered.compare(0, open.size(), open) != 0 ||
          rendered.compare(rendered.size() - close.size(), close.size(), close) != 0)
        throw Error("strip: not a BA-marked document");
      return rendered.substr(open.size(), rendered.size() - open.size() - close.size());
    }
    case Marking::BAS: {
      std::string s = rendered;
      detail::erase_all(s, detail::close_tag(id));
      detail::erase_all(s, detail::open_tag(id));
      return s;
    }
    case Marking::AW: {
      const auto bare = std::string(text::trim(id));
      std::vector<std::string> words;
      for (auto& w : text::split_words(rendered))
        if (w != bare) words.push_back(std::move(w));
      return text::join(words, " ");
    }
  }
  throw Error("unknown marking");
}

inline constexpr const char* kDefaultInstruction =
    "Instruction: Write an accurate, engaging, and concise answer for the given question using "
    "only the provided search results (some of which might be irrelevant). Use an unbiased and "
    "journalistic tone. If none of the search results contain the answer, reply with: I "
    "apologize, but I couldn't find an answer to your question in the search results.";

/// Prompt layout with {instruction}, {docs} and {query} placeholders.
struct PromptTemplate {
  std::string body = "{instruction}\n\n{docs}\n\nQuestion: {query}\nAnswer:";
  std::string instruction = kDefaultInstruction;

  void validate() const {
    for (const char* p : {"{instruction}", "{docs}", "{query}"})
      if (body.find(p) == std::string::npos)
        throw Error(std::string("prompt template lacks placeholder ") + p);
  }

  static PromptTemplate load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open prompt template '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    PromptTemplate t;
    t.body = ss.str();
    t.validate();
    return t;
  }
};

namespace detail {
inline void replace_first(std::string& s, std::string_view what, const std::string& with) {
  auto pos = s.find(what);
  if (pos != std::string::npos) s.replace(pos, what.size(), with);
}
}  // namespace detail

/// Renders instruction, marked documents (context order, one per line) and
/// query into the prompt text. No citation instruction is added.
inline std::string build_prompt(const std::string& query, const std::vector<MarkedDocument>& marked,
                                const PromptTemplate& tmpl = {}) {
  if (marked.empty()) throw Error("build_prompt: no documents");
  tmpl.validate();
  std::vector<std::string> docs;
  for (const auto& m : marked) docs.push_back(m.rendered);
  std::string out = tmpl.body;
  detail::replace_first(out, "{instruction}", tmpl.instruction);
  detail::replace_first(out, "{docs}", text::join(docs, "\n"));
  detail::replace_first(out, "{query}", query);
  return out;
}

/// Prompt with the context removed entirely (the ablated input).
inline std::string build_prompt_without_context(const std::string& query, const PromptTemplate& tmpl = {}) {
  tmpl.validate();
  std::string out = tmpl.body;
  detail::replace_first(out, "{instruction}", tmpl.instruction);
  detail::replace_first(out, "{docs}", "");
  detail::replace_first(out, "{query}", query);
  return out;
}

/// Marks every context document with its assigned identifier.
inline std::vector<MarkedDocument> mark_context(const std::vector<Document>& context,
                                                const IdentifierAssignment& assignment,
                                                const IdentifierPool& pool, Marking m) {
  if (assignment.size() != context.size()) throw Error("assignment does not cover the context");
  std::vector<MarkedDocument> out;
  for (std::size_t k = 0; k < context.size(); ++k) out.push_back(mark(context[k], assignment.token(pool, k), m));
  return out;
}

}  // namespace lodit
