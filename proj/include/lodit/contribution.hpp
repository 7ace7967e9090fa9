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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "lodit/generate.hpp"
#include "lodit/segment.hpp"

namespace lodit {

enum class ContributionSource { Finetuned, Frozen, AblateRepeat };

inline std::string_view to_string(ContributionSource s) {
  switch (s) {
    case ContributionSource::Finetuned: return "finetuned";
    case ContributionSource::Frozen: return "frozen";
    case ContributionSource::AblateRepeat: return "ablate_repeat";
  }
  return "?";
}

/// Token-level contributions of every context document to one statement:
/// rows are statement tokens, columns are context positions.
struct ContributionMatrix {
  std::size_t statement = 0;
  Eigen::MatrixXd values;
  ContributionSource source = ContributionSource::Finetuned;

  std::size_t tokens() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t docs() const { return static_cast<std::size_t>(values.cols()); }
};

namespace detail {
inline void check_partition(const std::vector<Statement>& statements, std::size_t n) {
  std::size_t at = 0;
  for (const auto& s : statements) {
    if (s.begin != at || s.end <= s.begin) throw Error("statement spans do not partition the answer");
    at = s.end;
  }
  if (at != n) throw Error("statement spans do not cover the answer");
}
}  // namespace detail

/// Identifier logits recorded during generation, sliced per statement.
inline std::vector<ContributionMatrix> contributions_from_records(
    const std::vector<StepRecord>& records, const std::vector<Statement>& statements, std::size_t k,
    ContributionSource source = ContributionSource::Finetuned) {
  detail::check_partition(statements, records.size());
  std::vector<ContributionMatrix> out;
  for (const auto& s : statements) {
    ContributionMatrix m{s.index, Eigen::MatrixXd(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(k)),
                         source};
    for (std::size_t j = s.begin; j < s.end; ++j) {
      const auto& rec = records[j];
      if (rec.index != j || rec.identifier_logits.size() != k)
        throw Error("step record " + std::to_string(j) + " does not align with the statement spans");
      for (std::size_t c = 0; c < k; ++c)
        m.values(static_cast<Eigen::Index>(j - s.begin), static_cast<Eigen::Index>(c)) = rec.identifier_logits[c];
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline constexpr double kContributionFloor = 1e-12;

/// log p_with - log p_without with both log-probabilities floored, or the
/// reverse difference when `as_printed`.
inline double log_ratio(double log_p_with, double log_p_without, bool as_printed = false) {
  const double lo = std::log(kContributionFloor);
  const double d = std::max(log_p_with, lo) - std::max(log_p_without, lo);
  return as_printed ? -d : d;
}

enum class AblationScope { WholeContext, PerDocument };

struct AblateRepeatOptions {
  AblationScope scope = AblationScope::WholeContext;
  /// Keep the literal orientation log p(without) - log p(with).
  bool as_printed = false;
};

struct AblateRepeatResult {
  std::vector<ContributionMatrix> matrices;
  std::size_t passes = 0;
};

/// Log-probability contributions from prompting with and without context.
/// One replay pass per generation step for each prompt variant; when
/// `with_records` is supplied (from generate() on the same prompt) the
/// with-context side is read from it instead of replayed.
template <typename Scalar>
AblateRepeatResult contributions_ablate_repeat(const Transformer<Scalar>& model, const PromptSetup& setup,
                                               const std::string& query, const std::vector<Document>& context,
                                               const IdentifierAssignment& assignment, const Tokens& answer,
                                               bool terminal_step, const std::vector<Statement>& statements,
                                               const AblateRepeatOptions& opt = {},
                                               const std::vector<StepRecord>* with_records = nullptr) {
  detail::check_partition(statements, answer.size());
  const std::size_t k = context.size();
  const std::size_t steps = answer.size() + (terminal_step ? 1 : 0);
  const auto ids = setup.identifier_entries(assignment);
  AblateRepeatResult res;

  // log p(id_k | prompt, answer[:j]) for j < steps, every k
  auto replay = [&](const Tokens& prompt) {
    std::vector<std::vector<double>> lp(steps, std::vector<double>(k));
    Tokens seq = prompt;
    for (std::size_t j = 0; j < steps; ++j) {
      const auto logits = model.forward(seq);
      ++res.passes;
      const auto row = logits.row(logits.rows() - 1);
      const double lse = logsumexp(row);
      for (std::size_t c = 0; c < k; ++c) lp[j][c] = static_cast<double>(row[ids[c]]) - lse;
      if (j < answer.size()) seq.push_back(answer[j]);
    }
    return lp;
  };

  std::vector<std::vector<double>> with;
  if (with_records) {
    if (with_records->size() != answer.size()) throw Error("ablate-repeat: records do not match the answer");
    for (const auto& r : *with_records) {
      std::vector<double> row(k);
      for (std::size_t c = 0; c < k; ++c) row[c] = r.identifier_logits[c] - r.log_normalizer;
      with.push_back(std::move(row));
    }
  } else {
    with = replay(setup.prompt_tokens(query, context, assignment));
  }

  std::vector<std::vector<double>> without(steps, std::vector<double>(k));
  if (opt.scope == AblationScope::WholeContext) {
    without = replay(setup.prompt_tokens_without_context(query));
  } else {
    for (std::size_t drop = 0; drop < k; ++drop) {
      std::vector<Document> rest;
      IdentifierAssignment sub{{}, assignment.mode};
      for (std::size_t c = 0; c < k; ++c)
        if (c != drop) {
          rest.push_back(context[c]);
          sub.slots.push_back(assignment.slots[c]);
        }
      auto lp = rest.empty() ? replay(setup.prompt_tokens_without_context(query))
                             : replay(setup.prompt_tokens(query, rest, sub));
      for (std::size_t j = 0; j < steps; ++j) without[j][drop] = lp[j][drop];
    }
  }

  for (const auto& s : statements) {
    ContributionMatrix m{s.index, Eigen::MatrixXd(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(k)),
                         ContributionSource::AblateRepeat};
    for (std::size_t j = s.begin; j < s.end; ++j)
      for (std::size_t c = 0; c < k; ++c) {
        m.values(static_cast<Eigen::Index>(j - s.begin), static_cast<Eigen::Index>(c)) =
            log_ratio(with[j][c], without[j][c], opt.as_printed);
      }
    res.matrices.push_back(std::move(m));
  }
  return res;
}

/// Columnar CSV: statement, token index, doc position (1-based), value, source.
inline void write_contributions_csv(std::ostream& out, const std::vector<ContributionMatrix>& ms,
                                    std::string_view query_id = {}, bool header = true) {
  if (header) out << (query_id.empty() ? "" : "query,") << "statement,token,doc,value,source\n";
  for (const auto& m : ms)
    for (Eigen::Index j = 0; j < m.values.rows(); ++j)
      for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
        if (!query_id.empty()) out << query_id << ',';
        out << m.statement << ',' << j << ',' << c + 1 << ',' << m.values(j, c) << ',' << to_string(m.source) << '\n';
      }
}

}  // namespace lodit
