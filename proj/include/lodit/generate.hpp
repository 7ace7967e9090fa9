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

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lodit/marking.hpp"
#include "lodit/model.hpp"
#include "lodit/vocab.hpp"

namespace lodit {

/// Everything needed to turn a query and its context into model input.
struct PromptSetup {
  IdentifierPool pool;
  Vocabulary vocab;
  Marking marking = Marking::BA;
  PromptTemplate tmpl;
  std::string refusal = kDefaultRefusal;

  Tokens prompt_tokens(const std::string& query, const std::vector<Document>& context,
                       const IdentifierAssignment& assignment) const {
    const auto marked = mark_context(context, assignment, pool, marking);
    Tokens t{vocab.bos()};
    auto body = tokenize(build_prompt(query, marked, tmpl), vocab);
    t.insert(t.end(), body.begin(), body.end());
    return t;
  }

  Tokens prompt_tokens_without_context(const std::string& query) const {
    Tokens t{vocab.bos()};
    auto body = tokenize(build_prompt_without_context(query, tmpl), vocab);
    t.insert(t.end(), body.begin(), body.end());
    return t;
  }

  /// Vocabulary index of the identifier at each context position.
  std::vector<TokenId> identifier_entries(const IdentifierAssignment& a) const {
    std::vector<TokenId> out;
    for (std::size_t k = 0; k < a.size(); ++k) out.push_back(vocab.identifier(a.token(pool, k)));
    return out;
  }
};

/// What one decoding step exposes to attribution.
struct StepRecord {
  std::size_t index = 0;
  TokenId token = 0;
  std::vector<double> identifier_logits;  // aligned with assignment positions
  double log_normalizer = 0.0;            // logsumexp of the full raw row
  double row_checksum = 0.0;              // sum of the full raw row
};

enum class Decode { Greedy, Temperature };

struct DecodeConfig {
  Decode mode = Decode::Greedy;
  double temperature = 1.0;
  std::size_t max_len = 48;
  std::uint64_t seed = 0;
};

struct Generation {
  Tokens answer;  // without EOS
  std::vector<StepRecord> records;
  bool stopped_by_eos = false;
  std::size_t passes = 0;  // forward passes, including the one that produced EOS
};

template <typename Row>
double logsumexp(const Row& row) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < row.size(); ++i) m = std::max(m, static_cast<double>(row[i]));
  double z = 0.0;
  for (Eigen::Index i = 0; i < row.size(); ++i) z += std::exp(static_cast<double>(row[i]) - m);
  return m + std::log(z);
}

/// Autoregressive decoding. Identifier logits are read from the raw row
/// before identifiers, delimiters and specials are masked out of sampling.
template <typename Scalar>
Generation generate(const Transformer<Scalar>& model, const Tokens& prompt, const std::vector<TokenId>& identifiers,
                    const Vocabulary& vocab, const DecodeConfig& decode = {}) {
  Generation g;
  Tokens seq = prompt;
  Rng rng(decode.seed);
  while (g.answer.size() < decode.max_len) {
    if (seq.size() > model.config().window)
      throw SequenceTooLong("generation overflowed the context window at step " + std::to_string(g.answer.size()));
    const auto logits = model.forward(seq);
    ++g.passes;
    const auto row = logits.row(logits.rows() - 1);

    StepRecord rec;
    rec.index = g.answer.size();
    for (auto id : identifiers) rec.identifier_logits.push_back(static_cast<double>(row[id]));
    rec.log_normalizer = logsumexp(row);
    for (Eigen::Index i = 0; i < row.size(); ++i) rec.row_checksum += static_cast<double>(row[i]);

    std::vector<double> masked(static_cast<std::size_t>(row.size()));
    for (Eigen::Index i = 0; i < row.size(); ++i)
      masked[i] = vocab.is_masked(static_cast<TokenId>(i)) ? -std::numeric_limits<double>::infinity()
                                                           : static_cast<double>(row[i]);
    TokenId next = 0;
    if (decode.mode == Decode::Greedy) {
      next = static_cast<TokenId>(std::max_element(masked.begin(), masked.end()) - masked.begin());
    } else {
      for (auto& v : masked) v /= decode.temperature;
      const auto p = softmax_probs(masked);
      std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
      next = static_cast<TokenId>(pick(rng));
    }
    if (next == vocab.eos()) {
      g.stopped_by_eos = true;
      break;
    }
    rec.token = next;
    g.records.push_back(std::move(rec));
    g.answer.push_back(next);
    seq.push_back(next);
  }
  return g;
}

}  // namespace lodit
