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
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lodit/config.hpp"
#include "lodit/contribution.hpp"
#include "lodit/corpus.hpp"
#include "lodit/segment.hpp"

namespace lodit {

enum class Aggregator { Prop, Max, Avg };

inline std::string_view to_string(Aggregator a) {
  switch (a) {
    case Aggregator::Prop: return "prop";
    case Aggregator::Max: return "max";
    case Aggregator::Avg: return "avg";
  }
  return "?";
}

inline Aggregator parse_aggregator(std::string_view s) {
  if (s == "prop") return Aggregator::Prop;
  if (s == "max") return Aggregator::Max;
  if (s == "avg") return Aggregator::Avg;
  throw Error("unknown aggregation operator '" + std::string(s) + "'");
}

struct AggregationConfig {
  Aggregator op = Aggregator::Prop;
  double phi_prop = 3.0;
  double lambda = 0.75;
  double phi_max = 3.0;
  double phi_avg = 3.0;

  void validate() const {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw Error("aggregation: lambda must lie in (0,1]");
    if (!std::isfinite(phi_prop) || !std::isfinite(phi_max) || !std::isfinite(phi_avg))
      throw Error("aggregation: thresholds must be finite");
  }

  static AggregationConfig from(const KeyValueConfig& kv) {
    AggregationConfig c;
    c.op = parse_aggregator(kv.get<std::string>("agg", "prop"));
    c.phi_prop = kv.get<double>("phi_prop", c.phi_prop);
    c.lambda = kv.get<double>("lambda", c.lambda);
    c.phi_max = kv.get<double>("phi_max", c.phi_max);
    c.phi_avg = kv.get<double>("phi_avg", c.phi_avg);
    return c;
  }
};

/// Context positions (0-based, ascending) attributed to one statement.
using Citation = std::vector<std::size_t>;

/// Position k is cited when strictly more than lambda * n_i tokens have a
/// contribution strictly above phi_prop.
inline Citation aggregate_prop(const Eigen::MatrixXd& m, double phi_prop, double lambda) {
  Citation out;
  const double bar = lambda * static_cast<double>(m.rows());
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    const auto hits = (m.col(k).array() > phi_prop).count();
    if (static_cast<double>(hits) > bar) out.push_back(static_cast<std::size_t>(k));
  }
  return out;
}

/// Position k is cited when its largest token contribution exceeds phi_max.
inline Citation aggregate_max(const Eigen::MatrixXd& m, double phi_max) {
  Citation out;
  if (m.rows() == 0) return out;
  for (Eigen::Index k = 0; k < m.cols(); ++k)
    if (m.col(k).maxCoeff() > phi_max) out.push_back(static_cast<std::size_t>(k));
  return out;
}

/// Position k is cited when its mean token contribution exceeds phi_avg.
/// Compared as a sum of differences so a column tied at phi_avg stays out.
inline Citation aggregate_avg(const Eigen::MatrixXd& m, double phi_avg) {
  Citation out;
  if (m.rows() == 0) return out;
  for (Eigen::Index k = 0; k < m.cols(); ++k)
    if ((m.col(k).array() - phi_avg).sum() > 0.0) out.push_back(static_cast<std::size_t>(k));
  return out;
}

inline Citation aggregate(const Eigen::MatrixXd& m, const AggregationConfig& cfg) {
  switch (cfg.op) {
    case Aggregator::Prop: return aggregate_prop(m, cfg.phi_prop, cfg.lambda);
    case Aggregator::Max: return aggregate_max(m, cfg.phi_max);
    case Aggregator::Avg: return aggregate_avg(m, cfg.phi_avg);
  }
  return {};
}

struct AttributedStatement {
  Statement statement;
  Citation cites;
};

struct AttributedAnswer {
  std::vector<AttributedStatement> statements;
  bool refused = false;
  std::string rendered;

  std::string answer_text() const {
    std::vector<std::string> parts;
    for (const auto& s : statements) parts.push_back(s.statement.text);
    return text::join(parts, " ");
  }
};

/// Statement text followed by "[k]" markers (1-based positions, ascending).
/// A refused answer renders as its refusal sentence alone.
inline std::string render_attributed_answer(const std::vector<AttributedStatement>& statements, bool refused = false) {
  std::vector<std::string> parts;
  for (const auto& s : statements) {
    std::string p = s.statement.text;
    if (!refused) {
      auto cites = s.cites;
      std::sort(cites.begin(), cites.end());
      if (!cites.empty()) p += ' ';
      for (auto c : cites) p += "[" + std::to_string(c + 1) + "]";
    }
    parts.push_back(std::move(p));
  }
  return text::join(parts, " ");
}

inline AttributedAnswer refusal_answer(const std::string& refusal_sentence) {
  AttributedAnswer a;
  a.statements = {{Statement{0, 0, 0, refusal_sentence}, {}}};
  a.refused = true;
  a.rendered = refusal_sentence;
  return a;
}

/// Replaces the answer with the refusal sentence when no statement cites anything.
inline AttributedAnswer failsafe(const AttributedAnswer& answer, const std::string& refusal_sentence = kDefaultRefusal) {
  const bool none = std::all_of(answer.statements.begin(), answer.statements.end(),
                                [](const AttributedStatement& s) { return s.cites.empty(); });
  if (!none) return answer;
  return refusal_answer(refusal_sentence);
}

/// Aggregates each statement's matrix, renders, and applies the fail-safe.
/// A generated answer that is itself the refusal sentence is marked refused.
inline AttributedAnswer attribute(const std::vector<Statement>& statements,
                                  const std::vector<ContributionMatrix>& matrices, const AggregationConfig& cfg,
                                  const std::string& refusal_sentence = kDefaultRefusal) {
  cfg.validate();
  if (statements.size() != matrices.size()) throw Error("attribute: one matrix per statement required");
  AttributedAnswer a;
  for (std::size_t i = 0; i < statements.size(); ++i) a.statements.push_back({statements[i], aggregate(matrices[i].values, cfg)});
  if (text::normalize(a.answer_text()) == text::normalize(refusal_sentence)) return refusal_answer(refusal_sentence);
  a.rendered = render_attributed_answer(a.statements);
  return failsafe(a, refusal_sentence);
}

/// {"query", "answer", "statements": [{"text", "cites": [int]}], "refused"}; cites are 1-based.
inline nlohmann::ordered_json to_json(const std::string& query, const AttributedAnswer& a) {
  nlohmann::ordered_json j;
  j["query"] = query;
  j["answer"] = a.rendered;
  j["statements"] = nlohmann::ordered_json::array();
  for (const auto& s : a.statements) {
    std::vector<std::size_t> cites;
    for (auto c : s.cites) cites.push_back(c + 1);
    j["statements"].push_back({{"text", s.statement.text}, {"cites", cites}});
  }
  j["refused"] = a.refused;
  return j;
}

}  // namespace lodit
