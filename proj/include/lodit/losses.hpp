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
#include <set>
#include <string>
#include <vector>

#include "lodit/corpus.hpp"
#include "lodit/marking.hpp"
#include "lodit/model.hpp"

namespace lodit {

/// Target logit values for identifier tokens, one per relation class.
struct LabelSchedule {
  double gold_cited = 4.0;
  double in_context_uncited = 2.0;
  double distractor = 0.0;
  double absent = -2.0;

  void validate() const {
    if (!(gold_cited > in_context_uncited && in_context_uncited > distractor && distractor > absent))
      throw Error("label schedule must be strictly decreasing");
  }
};

/// Per-statement label vectors indexed by pool slot.
using StatementLabels = std::vector<double>;

/// Labels for every gold statement. `assignment` covers the example context
/// followed by `num_distractors` appended distractor documents.
inline std::vector<StatementLabels> attribution_labels(const Example& example,
                                                       const IdentifierAssignment& assignment,
                                                       const IdentifierPool& pool,
                                                       const LabelSchedule& schedule,
                                                       std::size_t num_distractors = 0) {
  schedule.validate();
  const std::size_t k = example.context.size();
  if (assignment.size() != k + num_distractors)
    throw Error("attribution_labels: assignment does not cover context and distractors");
  std::vector<StatementLabels> out;
  for (const auto& g : example.gold) {
    StatementLabels lab(pool.size(), schedule.absent);
    std::set<std::string> cited(g.cites.begin(), g.cites.end());
    for (const auto& c : cited) {
      bool found = false;
      for (const auto& d : example.context) found = found || d.id == c;
      if (!found) throw Error("attribution_labels: gold citation '" + c + "' outside the context");
    }
    for (std::size_t p = 0; p < k; ++p)
      lab[assignment.slots[p]] =
          cited.count(example.context[p].id) ? schedule.gold_cited : schedule.in_context_uncited;
    for (std::size_t p = k; p < k + num_distractors; ++p) lab[assignment.slots[p]] = schedule.distractor;
    out.push_back(std::move(lab));
  }
  return out;
}

/// Mean negative log-likelihood of `gold[r]` under logit row r.
template <typename Rows>
double answer_loss(const Rows& rows, const std::vector<TokenId>& gold) {
  if (gold.empty()) throw Error("answer_loss: empty answer");
  if (static_cast<std::size_t>(rows.rows()) != gold.size())
    throw Error("answer_loss: one logit row per gold token required");
  double s = 0.0;
  for (std::size_t r = 0; r < gold.size(); ++r)
    s -= log_softmax_at(rows.row(static_cast<Eigen::Index>(r)), static_cast<std::size_t>(gold[r]));
  return s / static_cast<double>(gold.size());
}

/// Sum over positions and labeled identifiers of (logit - label)^2.
/// `logits[j][i]` and `labels[j][i]` share identifier order i.
inline double attribution_loss_mse(const std::vector<std::vector<double>>& logits,
                                   const std::vector<std::vector<double>>& labels) {
  if (logits.size() != labels.size()) throw Error("attribution_loss_mse: position count mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (logits[j].size() != labels[j].size()) throw Error("attribution_loss_mse: label/assignment mismatch");
    for (std::size_t i = 0; i < logits[j].size(); ++i) s += (logits[j][i] - labels[j][i]) * (logits[j][i] - labels[j][i]);
  }
  return s;
}

inline constexpr double kProbFloor = 1e-12;

/// KL(target || model) for one position; target = softmax(labels), model =
/// `probs` renormalized over the labeled identifiers and floored before log.
inline double kl_position(const std::vector<double>& probs, const std::vector<double>& labels) {
  if (probs.size() != labels.size()) throw Error("attribution_loss_kl: label/assignment mismatch");
  const auto t = softmax_probs(labels);
  double z = 0.0;
  for (double p : probs) z += p;
  double kl = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] <= 0.0) continue;
    const double m = z > 0.0 ? probs[i] / z : 0.0;
    kl += t[i] * (std::log(t[i]) - std::log(std::max(m, kProbFloor)));
  }
  return kl;
}

/// Sum over positions of kl_position.
inline double attribution_loss_kl(const std::vector<std::vector<double>>& probs,
                                  const std::vector<std::vector<double>>& labels) {
  if (probs.size() != labels.size()) throw Error("attribution_loss_kl: position count mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) s += kl_position(probs[j], labels[j]);
  return s;
}

inline double joint_loss(double l_ans, double l_att, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("joint_loss: alpha must lie in [0,1]");
  return (1.0 - alpha) * l_ans + alpha * l_att;
}

enum class AttLoss { Mse, Kl };

inline AttLoss parse_att_loss(std::string_view s) {
  if (s == "mse") return AttLoss::Mse;
  if (s == "kl") return AttLoss::Kl;
  throw Error("unknown attribution loss '" + std::string(s) + "'");
}

namespace grad {

/// d(answer_loss)/d(row) added into `drow`, scaled by `w`.
template <typename Row, typename DRow>
void answer_row(const Row& row, TokenId gold, double w, DRow&& drow) {
  const auto p = softmax_probs(row);
  for (std::size_t i = 0; i < p.size(); ++i) drow[static_cast<Eigen::Index>(i)] += static_cast<typename std::decay_t<DRow>::Scalar>(w * p[i]);
  drow[gold] -= static_cast<typename std::decay_t<DRow>::Scalar>(w);
}

/// d(mse)/d(l_i) = 2 (l_i - y_i).
inline std::vector<double> mse_position(const std::vector<double>& logits, const std::vector<double>& labels) {
  std::vector<double> g(logits.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (logits[i] - labels[i]);
  return g;
}

/// d(kl_position(softmax(logits), labels))/d(logits) for logits over the
/// labeled identifiers. Floored entries contribute no gradient.
inline std::vector<double> kl_position(const std::vector<double>& logits, const std::vector<double>& labels) {
  const auto t = softmax_probs(labels);
  const auto m = softmax_probs(logits);
  double live = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (m[i] >= kProbFloor) live += t[i];
  std::vector<double> g(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) g[j] = m[j] * live - (m[j] >= kProbFloor ? t[j] : 0.0);
  return g;
}

}  // namespace grad
}  // namespace lodit
