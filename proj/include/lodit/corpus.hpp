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
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lodit/config.hpp"
#include "lodit/text.hpp"

namespace lodit {

using Rng = std::mt19937_64;

inline constexpr const char* kDefaultRefusal =
    "I apologize, but I couldn't find an answer to your question in the search results.";

struct SchemaError : Error {
  SchemaError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

struct Document {
  std::string id;
  std::string text;

  friend bool operator==(const Document&, const Document&) = default;
};

struct GoldStatement {
  std::string text;
  std::vector<std::string> cites;  // doc ids, no duplicates

  friend bool operator==(const GoldStatement&, const GoldStatement&) = default;
};

struct Example {
  std::string query;
  std::vector<Document> context;
  std::vector<GoldStatement> gold;
  bool is_refusal = false;

  friend bool operator==(const Example&, const Example&) = default;

  std::set<std::string> cited_ids() const {
    std::set<std::string> out;
    for (const auto& g : gold) out.insert(g.cites.begin(), g.cites.end());
    return out;
  }
};

/// Throws Error describing the first violated invariant.
inline void validate(const Document& d) {
  if (text::trim(d.text).empty()) throw Error("document '" + d.id + "' has empty text");
  if (d.text.find('<') != std::string::npos || d.text.find('>') != std::string::npos)
    throw Error("document '" + d.id + "' contains a marker delimiter");
}

inline void validate(const Example& ex) {
  if (ex.context.empty()) throw Error("example has no context documents");
  std::set<std::string> ids;
  for (const auto& d : ex.context) {
    validate(d);
    if (!ids.insert(d.id).second) throw Error("duplicate doc id '" + d.id + "'");
  }
  if (ex.gold.empty()) throw Error("example has no gold statements");
  for (const auto& g : ex.gold) {
    if (text::trim(g.text).empty()) throw Error("empty gold statement");
    std::set<std::string> seen;
    for (const auto& c : g.cites) {
      if (!ids.count(c)) throw Error("gold citation names absent doc id '" + c + "'");
      if (!seen.insert(c).second) throw Error("duplicate citation '" + c + "'");
    }
    if (ex.is_refusal && !g.cites.empty()) throw Error("refusal example carries citations");
  }
}

// --- JSONL ------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const Example& ex) {
  nlohmann::ordered_json j;
  j["query"] = ex.query;
  j["docs"] = nlohmann::ordered_json::array();
  for (const auto& d : ex.context) j["docs"].push_back({{"id", d.id}, {"text", d.text}});
  j["gold"] = nlohmann::ordered_json::array();
  for (const auto& g : ex.gold) j["gold"].push_back({{"text", g.text}, {"cites", g.cites}});
  j["refusal"] = ex.is_refusal;
  return j;
}

inline Example example_from_json(const nlohmann::json& j, std::size_t line) {
  auto need = [&](const nlohmann::json& obj, const char* key, auto check, const char* type) {
    if (!obj.is_object() || !obj.contains(key) || !check(obj.at(key)))
      throw SchemaError(line, std::string("field '") + key + "' missing or not " + type);
    return obj.at(key);
  };
  auto is_str = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_arr = [](const nlohmann::json& v) { return v.is_array(); };
  auto is_bool = [](const nlohmann::json& v) { return v.is_boolean(); };

  Example ex;
  ex.query = need(j, "query", is_str, "a string").template get<std::string>();
  for (const auto& d : need(j, "docs", is_arr, "an array"))
    ex.context.push_back({need(d, "id", is_str, "a string").template get<std::string>(),
                          need(d, "text", is_str, "a string").template get<std::string>()});
  for (const auto& g : need(j, "gold", is_arr, "an array")) {
    GoldStatement gs;
    gs.text = need(g, "text", is_str, "a string").template get<std::string>();
    for (const auto& c : need(g, "cites", is_arr, "an array")) {
      if (!c.is_string()) throw SchemaError(line, "citation is not a string");
      gs.cites.push_back(c.get<std::string>());
    }
    ex.gold.push_back(std::move(gs));
  }
  ex.is_refusal = need(j, "refusal", is_bool, "a boolean").template get<bool>();
  try {
    validate(ex);
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(line, e.what());
  }
  return ex;
}

inline std::vector<Example> parse_dataset(std::istream& in) {
  std::vector<Example> out;
  std::string buf;
  std::size_t line = 0;
  while (std::getline(in, buf)) {
    ++line;
    if (text::trim(buf).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(buf);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(line, std::string("malformed JSON: ") + e.what());
    }
    out.push_back(example_from_json(j, line));
  }
  return out;
}

inline std::vector<Example> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  return parse_dataset(in);
}

inline void write_dataset(std::ostream& out, const std::vector<Example>& data) {
  for (const auto& ex : data) out << to_json(ex).dump() << '\n';
}

inline void save_dataset(const std::string& path, const std::vector<Example>& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset '" + path + "'");
  write_dataset(out, data);
}

// --- sampling helpers ---------------------------------------------------------

/// First k entries of a seeded Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k && i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(std::min(k, n));
  return idx;
}

/// All documents of a dataset, first occurrence of each id kept.
inline std::vector<Document> document_pool(const std::vector<Example>& data) {
  std::vector<Document> out;
  std::unordered_set<std::string> seen;
  for (const auto& ex : data)
    for (const auto& d : ex.context)
      if (seen.insert(d.id).second) out.push_back(d);
  return out;
}

// --- context padding ------------------------------------------------------------

/// Appends documents drawn without replacement from `pool` until the context
/// holds at least `min_docs` entries. Padded documents are never cited.
inline Example pad_context(const Example& example, const std::vector<Document>& pool,
                           std::size_t min_docs, Rng& rng) {
  if (example.context.size() >= min_docs) return example;
  std::unordered_set<std::string> ids;
  for (const auto& d : example.context) ids.insert(d.id);
  std::vector<const Document*> eligible;
  for (const auto& d : pool) {
    if (ids.count(d.id)) throw Error("pad_context: pool document '" + d.id + "' already in context");
    eligible.push_back(&d);
  }
  const std::size_t need = min_docs - example.context.size();
  if (eligible.size() < need)
    throw Error("pad_context: pool has " + std::to_string(eligible.size()) + " documents, need " +
                std::to_string(need));
  Example out = example;
  for (auto i : sample_indices(eligible.size(), need, rng)) out.context.push_back(*eligible[i]);
  return out;
}

/// Pads every example using documents from the rest of the dataset.
inline std::vector<Example> pad_dataset(const std::vector<Example>& data, std::size_t min_docs,
                                        Rng& rng) {
  auto pool = document_pool(data);
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    if (ex.context.size() >= min_docs) {
      out.push_back(ex);
      continue;
    }
    std::unordered_set<std::string> ids;
    for (const auto& d : ex.context) ids.insert(d.id);
    std::vector<Document> rest;
    for (const auto& d : pool)
      if (!ids.count(d.id)) rest.push_back(d);
    out.push_back(pad_context(ex, rest, min_docs, rng));
  }
  return out;
}

// --- refusal augmentation ---------------------------------------------------------

/// Decides whether `candidate` may serve as an irrelevant document for a refusal
/// built from `source`'s query.
using RefusalFilter = std::function<bool(const Example& source, const Document& candidate)>;

inline bool not_in_source_context(const Example& source, const Document& candidate) {
  return std::none_of(source.context.begin(), source.context.end(),
                      [&](const Document& d) { return d.id == candidate.id; });
}

/// Number of refusals to add to `n` examples so that refusals make up `ratio`
/// of the result.
inline std::size_t refusals_needed(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n) / (1.0 - ratio)));
}

/// Appends synthesized refusal examples: a real query from the dataset paired
/// with documents sampled from `doc_pool`, gold = the refusal sentence.
inline std::vector<Example> augment_refusals(const std::vector<Example>& dataset, double ratio,
                                             const std::vector<Document>& doc_pool, Rng& rng,
                                             const std::string& refusal_sentence = kDefaultRefusal,
                                             const RefusalFilter& admissible = not_in_source_context) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw Error("augment_refusals: ratio must lie in [0,1)");
  std::vector<Example> out = dataset;
  const std::size_t add = refusals_needed(dataset.size(), ratio);
  if (add == 0) return out;
  if (doc_pool.empty()) throw Error("augment_refusals: empty document pool");
  if (dataset.empty()) throw Error("augment_refusals: no queries to sample from");

  std::uniform_int_distribution<std::size_t> pick_query(0, dataset.size() - 1);
  for (std::size_t r = 0; r < add; ++r) {
    const Example& src = dataset[pick_query(rng)];
    const std::size_t k = std::max<std::size_t>(1, src.context.size());
    Example ex;
    ex.query = src.query;
    // rejection sampling first; a full scan only when the filter is selective
    std::uniform_int_distribution<std::size_t> pick_doc(0, doc_pool.size() - 1);
    std::unordered_set<std::size_t> chosen;
    for (std::size_t tries = 0; chosen.size() < k && tries < 64 * k; ++tries) {
      const auto i = pick_doc(rng);
      if (!chosen.count(i) && admissible(src, doc_pool[i])) {
        chosen.insert(i);
        ex.context.push_back(doc_pool[i]);
      }
    }
    if (chosen.size() < k) {
      ex.context.clear();
      std::vector<const Document*> eligible;
      for (const auto& d : doc_pool)
        if (admissible(src, d)) eligible.push_back(&d);
      if (eligible.size() < k)
        throw Error("augment_refusals: not enough admissible documents for query '" + src.query + "'");
      for (auto i : sample_indices(eligible.size(), k, rng)) ex.context.push_back(*eligible[i]);
    }
    ex.gold = {{refusal_sentence, {}}};
    ex.is_refusal = true;
    out.push_back(std::move(ex));
  }
  return out;
}

inline double refusal_fraction(const std::vector<Example>& data) {
  if (data.empty()) return 0.0;
  auto n = std::count_if(data.begin(), data.end(), [](const Example& e) { return e.is_refusal; });
  return static_cast<double>(n) / static_cast<double>(data.size());
}

// --- synthetic lookup task -----------------------------------------------------------

struct SyntheticTaskConfig {
  std::size_t num_examples = 1000;
  std::size_t num_docs_per_context = 5;
  std::size_t num_facts_per_doc = 1;
  std::uint64_t vocab_seed = 7;  // nonce word lists
  std::uint64_t seed = 1;        // example sampling
  /// Fraction of non-gold documents whose facts share the queried attribute.
  double distractor_ratio = 0.5;
  std::size_t num_keys = 48;
  std::size_t num_values = 48;
  std::size_t num_attributes = 4;

  void validate() const {
    if (num_examples < 1 || num_docs_per_context < 1 || num_facts_per_doc < 1)
      throw Error("synthetic config: counts must be >= 1");
    if (!(distractor_ratio >= 0.0 && distractor_ratio <= 1.0))
      throw Error("synthetic config: distractor_ratio must lie in [0,1]");
    if (num_keys < num_docs_per_context * num_facts_per_doc + 1)
      throw Error("synthetic config: num_keys too small for a context");
    if (num_values < 1 || num_attributes < 1) throw Error("synthetic config: empty value space");
    if (num_attributes < 2 && distractor_ratio < 1.0)
      throw Error("synthetic config: off-topic distractors need two attributes");
  }

  static SyntheticTaskConfig from(const KeyValueConfig& kv) {
    SyntheticTaskConfig c;
    c.num_examples = kv.get<std::size_t>("num_examples", c.num_examples);
    c.num_docs_per_context = kv.get<std::size_t>("num_docs_per_context", c.num_docs_per_context);
    c.num_facts_per_doc = kv.get<std::size_t>("num_facts_per_doc", c.num_facts_per_doc);
    c.vocab_seed = kv.get<std::uint64_t>("vocab_seed", c.vocab_seed);
    c.seed = kv.get<std::uint64_t>("seed", c.seed);
    c.distractor_ratio = kv.get<double>("distractor_ratio", c.distractor_ratio);
    c.num_keys = kv.get<std::size_t>("num_keys", c.num_keys);
    c.num_values = kv.get<std::size_t>("num_values", c.num_values);
    c.num_attributes = kv.get<std::size_t>("num_attributes", c.num_attributes);
    return c;
  }
};

namespace detail {

/// Pronounceable lowercase nonce words, distinct within one call.
inline std::vector<std::string> nonce_words(std::size_t n, std::size_t syllables, Rng& rng,
                                            std::unordered_set<std::string>& taken) {
  static constexpr std::string_view kOnset = "bdfgklmnprstvz";
  static constexpr std::string_view kVowel = "aeiou";
  std::uniform_int_distribution<std::size_t> on(0, kOnset.size() - 1), vo(0, kVowel.size() - 1);
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kOnset[on(rng)];
      w += kVowel[vo(rng)];
    }
    if (text::is_stopword(w) || !taken.insert(w).second) continue;
    out.push_back(w);
  }
  return out;
}

}  // namespace detail

/// Key -> value lookup examples. Exactly one context document states the
/// queried key's fact; every other document states facts about other keys.
/// Names, positions and values are a pure function of `vocab_seed`.
inline std::vector<Example> gen_synthetic(const SyntheticTaskConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.vocab_seed);
  std::unordered_set<std::string> taken;
  const auto keys = detail::nonce_words(cfg.num_keys, 2, rng, taken);
  const auto values = detail::nonce_words(cfg.num_values, 3, rng, taken);
  rng.seed(cfg.seed);
  static constexpr const char* kAttributes[] = {"color", "city", "code",  "owner",
                                                "size",  "tool", "price", "field"};
  const std::size_t n_attr = std::min<std::size_t>(cfg.num_attributes, std::size(kAttributes));

  // record style, value right after its key: "the color of bima famipe."
  auto fact = [](const std::string& attr, const std::string& key, const std::string& value) {
    return "the " + attr + " of " + key + " " + value + ".";
  };

  std::uniform_int_distribution<std::size_t> pick_attr(0, n_attr - 1), pick_val(0, values.size() - 1),
      pick_pos(0, cfg.num_docs_per_context - 1), pick_fact(0, cfg.num_facts_per_doc - 1);
  std::bernoulli_distribution topical(cfg.distractor_ratio);

  std::vector<Example> out;
  out.reserve(cfg.num_examples);
  const std::size_t facts_total = cfg.num_docs_per_context * cfg.num_facts_per_doc;
  for (std::size_t e = 0; e < cfg.num_examples; ++e) {
    const auto key_idx = sample_indices(keys.size(), facts_total, rng);
    const std::size_t attr = pick_attr(rng);
    const std::size_t gold_pos = pick_pos(rng);
    const std::size_t gold_fact = pick_fact(rng);
    const std::string& qkey = keys[key_idx[gold_pos * cfg.num_facts_per_doc + gold_fact]];
    const std::string qvalue = values[pick_val(rng)];

    Example ex;
    ex.query = "what is the " + std::string(kAttributes[attr]) + " of " + qkey + "?";
    for (std::size_t p = 0; p < cfg.num_docs_per_context; ++p) {
      std::vector<std::string> facts;
      const bool on_topic = p == gold_pos || topical(rng);
      for (std::size_t f = 0; f < cfg.num_facts_per_doc; ++f) {
        const std::string& key = keys[key_idx[p * cfg.num_facts_per_doc + f]];
        if (p == gold_pos && f == gold_fact) {
          facts.push_back(fact(kAttributes[attr], key, qvalue));
          continue;
        }
        std::size_t a = attr;
        if (!on_topic) a = (attr + 1 + pick_attr(rng) % (n_attr - 1)) % n_attr;
        facts.push_back(fact(kAttributes[a], key, values[pick_val(rng)]));
      }
      ex.context.push_back({"s" + std::to_string(e) + "-" + std::to_string(p), text::join(facts, " ")});
    }
    ex.gold = {{fact(kAttributes[attr], qkey, qvalue), {ex.context[gold_pos].id}}};
    out.push_back(std::move(ex));
  }
  return out;
}

/// The key a synthetic query asks about (last word before '?').
inline std::string synthetic_query_key(const std::string& query) {
  auto words = text::split_words(query);
  if (words.empty()) return {};
  std::string w = words.back();
  while (!w.empty() && (w.back() == '?' || w.back() == '.')) w.pop_back();
  return w;
}

/// Refusal filter for synthetic data: the candidate must not mention the key.
inline bool synthetic_irrelevant(const Example& source, const Document& candidate) {
  if (!not_in_source_context(source, candidate)) return false;
  const auto key = synthetic_query_key(source.query);
  for (const auto& w : text::split_words(text::normalize(candidate.text)))
    if (w == key) return false;
  return true;
}

}  // namespace lodit
