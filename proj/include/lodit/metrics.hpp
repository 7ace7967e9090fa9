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

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lodit/attribution.hpp"
#include "lodit/corpus.hpp"
#include "lodit/text.hpp"

namespace lodit {

/// A scored example: the gold example with its context in prompt order, and
/// the prediction whose citations index that context.
struct EvalItem {
  Example example;
  AttributedAnswer prediction;
};

// --- groundedness judging -------------------------------------------------------

struct JudgeVerdict {
  std::string statement;
  Citation cites;
  bool supported = false;
  std::vector<bool> per_citation;  // aligned with cites
};

struct JudgeError : Error {
  using Error::Error;
};

class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeVerdict judge(const std::string& statement, const std::vector<Document>& context,
                             const Citation& cites) const = 0;
};

/// Content-word overlap judge. A document set supports a statement when at
/// least `threshold` of the statement's content words occur in it.
class LexicalJudge : public Judge {
 public:
  explicit LexicalJudge(double threshold = 0.6) : threshold_(threshold) {}

  double overlap(const std::string& statement, const std::vector<const Document*>& docs) const {
    std::set<std::string> have;
    for (const auto* d : docs)
      for (auto& w : text::content_words(d->text)) have.insert(std::move(w));
    const auto words = text::content_words(statement);
    const std::set<std::string> want(words.begin(), words.end());
    if (want.empty()) return 1.0;
    std::size_t hit = 0;
    for (const auto& w : want) hit += have.count(w);
    return static_cast<double>(hit) / static_cast<double>(want.size());
  }

  JudgeVerdict judge(const std::string& statement, const std::vector<Document>& context,
                     const Citation& cites) const override {
    JudgeVerdict v{statement, cites, false, {}};
    std::vector<const Document*> docs;
    for (auto c : cites) {
      if (c >= context.size()) throw JudgeError("citation [" + std::to_string(c + 1) + "] is outside the context");
      docs.push_back(&context[c]);
      v.per_citation.push_back(overlap(statement, {&context[c]}) >= threshold_);
    }
    const bool any = std::find(v.per_citation.begin(), v.per_citation.end(), true) != v.per_citation.end();
    v.supported = !docs.empty() && any && overlap(statement, docs) >= threshold_;
    return v;
  }

 private:
  double threshold_;
};

/// Delegates to an external command: one JSON request on stdin
/// ({"statement", "docs": [str]}), one JSON reply on stdout
/// ({"supported": bool, "per_citation": [bool]}).
class ExternalJudge : public Judge {
 public:
  explicit ExternalJudge(std::string command) : command_(std::move(command)) {}

  JudgeVerdict judge(const std::string& statement, const std::vector<Document>& context,
                     const Citation& cites) const override {
    nlohmann::json req{{"statement", statement}, {"docs", nlohmann::json::array()}};
    for (auto c : cites) {
      if (c >= context.size()) throw JudgeError("citation [" + std::to_string(c + 1) + "] is outside the context");
      req["docs"].push_back(context[c].text);
    }
    const auto dir = std::filesystem::temp_directory_path();
    const auto in = dir / ("lodit-judge-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + ".in");
    const auto out = dir / ("lodit-judge-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + ".out");
    std::ofstream(in) << req.dump() << '\n';
    const int rc = std::system((command_ + " < '" + in.string() + "' > '" + out.string() + "'").c_str());
    if (rc != 0) throw JudgeError("judge command failed with status " + std::to_string(rc));
    std::ifstream rin(out);
    nlohmann::json rep;
    try {
      rep = nlohmann::json::parse(rin);
    } catch (const nlohmann::json::parse_error& e) {
      throw JudgeError(std::string("judge reply is not JSON: ") + e.what());
    }
    JudgeVerdict v{statement, cites, rep.value("supported", false), {}};
    for (const auto& b : rep.value("per_citation", nlohmann::json::array())) v.per_citation.push_back(b.get<bool>());
    if (v.per_citation.size() != cites.size()) throw JudgeError("judge reply has wrong per_citation length");
    return v;
  }

 private:
  std::string command_;
};

// --- F1 helpers ---------------------------------------------------------------

/// p = hits / predicted, r = hits / gold, with 0 when only one side is empty
/// and 1 when both are.
inline double safe_ratio(double num, double den, bool other_empty) {
  if (den > 0.0) return num / den;
  return other_empty ? 1.0 : 0.0;
}

inline double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

struct PrecisionRecall {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// --- answer correctness --------------------------------------------------------

/// Fraction of the example's gold claims (normalized statement texts)
/// appearing as word sequences in the normalized prediction.
inline double claim_recall(const Example& ex, const AttributedAnswer& pred) {
  if (pred.refused || ex.gold.empty()) return 0.0;
  const std::string hay = " " + text::normalize(pred.answer_text()) + " ";
  std::size_t hit = 0;
  for (const auto& g : ex.gold) {
    const auto claim = text::normalize(g.text);
    if (!claim.empty() && hay.find(" " + claim + " ") != std::string::npos) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(ex.gold.size());
}

/// Over answerable examples: precision averages claim recall over answered
/// ones, recall over all of them (refusals score 0). Empty answerable set
/// yields nullopt.
inline std::optional<PrecisionRecall> f1_answer_correctness(const std::vector<EvalItem>& items) {
  double sum = 0.0;
  std::size_t answerable = 0, answered = 0;
  for (const auto& it : items) {
    if (it.example.is_refusal) continue;
    ++answerable;
    if (it.prediction.refused) continue;
    ++answered;
    sum += claim_recall(it.example, it.prediction);
  }
  if (answerable == 0) return std::nullopt;
  PrecisionRecall pr;
  pr.precision = safe_ratio(sum, static_cast<double>(answered), false);
  pr.recall = sum / static_cast<double>(answerable);
  pr.f1 = f1(pr.precision, pr.recall);
  return pr;
}

// --- grounded refusal -----------------------------------------------------------

/// Refusal decisions scored against gold unanswerability (refusing an
/// unanswerable query is a true positive).
inline PrecisionRecall f1_grounded_refusal(const std::vector<EvalItem>& items) {
  double tp = 0, fp = 0, fn = 0;
  for (const auto& it : items) {
    const bool pred = it.prediction.refused, gold = it.example.is_refusal;
    tp += pred && gold;
    fp += pred && !gold;
    fn += !pred && gold;
  }
  PrecisionRecall pr;
  pr.precision = safe_ratio(tp, tp + fp, tp + fn == 0);
  pr.recall = safe_ratio(tp, tp + fn, tp + fp == 0);
  pr.f1 = f1(pr.precision, pr.recall);
  return pr;
}

// --- citation groundedness -------------------------------------------------------

/// Over statements of answered predictions: recall = supported statements,
/// precision = citations flagged supportive within supported statements.
/// All-refused input yields nullopt.
inline std::optional<PrecisionRecall> f1_citation_groundedness(const std::vector<EvalItem>& items, const Judge& judge) {
  double statements = 0, supported = 0, citations = 0, good = 0;
  for (std::size_t e = 0; e < items.size(); ++e) {
    const auto& it = items[e];
    if (it.prediction.refused) continue;
    for (const auto& s : it.prediction.statements) {
      JudgeVerdict v;
      try {
        v = judge.judge(s.statement.text, it.example.context, s.cites);
      } catch (const JudgeError& err) {
        throw JudgeError("example " + std::to_string(e) + ", statement " + std::to_string(s.statement.index) + ": " +
                         err.what());
      }
      ++statements;
      supported += v.supported;
      citations += static_cast<double>(s.cites.size());
      for (bool f : v.per_citation) good += v.supported && f;
    }
  }
  if (statements == 0) return std::nullopt;
  PrecisionRecall pr;
  pr.recall = supported / statements;
  pr.precision = safe_ratio(good, citations, false);
  pr.f1 = f1(pr.precision, pr.recall);
  return pr;
}

inline double trust_score(double f1_ac, double f1_gr, double f1_gc) { return (f1_ac + f1_gr + f1_gc) / 3.0; }

/// Citation sets matching gold exactly, per statement, over answerable
/// examples. A prediction with a different statement count misses.
inline double attribution_exact_match(const std::vector<EvalItem>& items) {
  std::size_t n = 0, hit = 0;
  for (const auto& it : items) {
    if (it.example.is_refusal) continue;
    ++n;
    const auto& pred = it.prediction;
    if (pred.refused || pred.statements.size() != it.example.gold.size()) continue;
    bool ok = true;
    for (std::size_t i = 0; i < pred.statements.size() && ok; ++i) {
      std::set<std::size_t> want;
      for (const auto& c : it.example.gold[i].cites)
        for (std::size_t k = 0; k < it.example.context.size(); ++k)
          if (it.example.context[k].id == c) want.insert(k);
      ok = want == std::set<std::size_t>(pred.statements[i].cites.begin(), pred.statements[i].cites.end());
    }
    hit += ok;
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

}  // namespace lodit
